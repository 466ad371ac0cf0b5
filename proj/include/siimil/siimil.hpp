#pragma once

// Salient-instance-inference multiple instance learning on precomputed
// instance embeddings: leverage-score key learning from negative bags,
// cosine-saliency instance filtering, and a trainable gated-attention bag
// classifier, plus metrics and a synthetic rare-positive generator.

#include "siimil/abmil.hpp"
#include "siimil/eval.hpp"
#include "siimil/heatmap.hpp"
#include "siimil/io.hpp"
#include "siimil/keylearn.hpp"
#include "siimil/rng.hpp"
#include "siimil/sii.hpp"
#include "siimil/synth.hpp"
#include "siimil/types.hpp"
