#pragma once

#include "cdn/config.hpp"
#include "cdn/dataset.hpp"
#include "cdn/error.hpp"
#include "cdn/harness.hpp"
#include "cdn/model_io.hpp"
#include "cdn/readout.hpp"
#include "cdn/report.hpp"
#include "cdn/reservoir.hpp"
#include "cdn/spectral.hpp"
#include "cdn/synth.hpp"
