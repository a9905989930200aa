#pragma once

// Umbrella header for the rgdiff library: reliability-guided diffusion
// sampling and uncertainty-aware candidate selection for paired
// low-quality -> high-quality image synthesis, with analytic denoisers,
// synthetic phantoms, degradation modelling, and PSNR/SSIM metrics.

#include "rgdiff/config.hpp"
#include "rgdiff/degradation.hpp"
#include "rgdiff/denoiser.hpp"
#include "rgdiff/errors.hpp"
#include "rgdiff/experiment.hpp"
#include "rgdiff/metrics.hpp"
#include "rgdiff/phantom.hpp"
#include "rgdiff/rgs.hpp"
#include "rgdiff/rng.hpp"
#include "rgdiff/schedule.hpp"
#include "rgdiff/tiny_denoiser.hpp"
#include "rgdiff/ucs.hpp"
#include "rgdiff/volume.hpp"
#include "rgdiff/volume_io.hpp"
