#pragma once

#include "dac/core.hpp"
#include "dac/covariance.hpp"
#include "dac/geometry/camera.hpp"
#include "dac/geometry/epnp.hpp"
#include "dac/geometry/lm.hpp"
#include "dac/geometry/motion_ba.hpp"
#include "dac/geometry/pose_error.hpp"
#include "dac/geometry/scene_io.hpp"
#include "dac/geometry/tracks.hpp"
#include "dac/geometry/triangulation.hpp"
#include "dac/matching.hpp"
#include "dac/records.hpp"
#include "dac/scoremap.hpp"
#include "dac/scoremap_io.hpp"
#include "dac/synth/blob.hpp"
#include "dac/synth/crlb.hpp"
#include "dac/synth/epnpu_validation.hpp"
#include "dac/synth/homography_pair.hpp"
#include "dac/synth/mma_experiment.hpp"
#include "dac/synth/noise.hpp"
#include "dac/synth/pnp_scene.hpp"
#include "dac/synth/pose_scene.hpp"
#include "dac/synth/random.hpp"
#include "dac/synth/triangulation_trials.hpp"
