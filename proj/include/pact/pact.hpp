#pragma once

// Umbrella header for the limited-view photoacoustic reconstruction toolkit.

#include "pact/core.hpp"
#include "pact/dataset.hpp"
#include "pact/dav.hpp"
#include "pact/geometry.hpp"
#include "pact/io.hpp"
#include "pact/metrics.hpp"
#include "pact/neural.hpp"
#include "pact/phantom.hpp"
#include "pact/recon.hpp"
#include "pact/rng.hpp"
#include "pact/system_matrix.hpp"
#include "pact/tensor.hpp"
