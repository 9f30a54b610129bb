#pragma once

// Umbrella header for the auscult toolkit.

#include "auscult/audio.hpp"
#include "auscult/augment.hpp"
#include "auscult/contrastive.hpp"
#include "auscult/eval.hpp"
#include "auscult/experiments.hpp"
#include "auscult/features.hpp"
#include "auscult/rng.hpp"
#include "auscult/synth.hpp"
