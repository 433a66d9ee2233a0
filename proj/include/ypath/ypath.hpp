#pragma once

// Umbrella header for the whole library. The HTTP pieces (gateway_http.hpp,
// service.hpp) are deliberately left out; include them where a binary
// actually talks to the network.

#include "ypath/benchbuild.hpp"
#include "ypath/benchmark.hpp"
#include "ypath/common.hpp"
#include "ypath/config.hpp"
#include "ypath/dense.hpp"
#include "ypath/eval.hpp"
#include "ypath/fusion.hpp"
#include "ypath/gateway.hpp"
#include "ypath/generate.hpp"
#include "ypath/lexicon.hpp"
#include "ypath/pipeline.hpp"
#include "ypath/prompts.hpp"
#include "ypath/sed.hpp"
#include "ypath/sparse.hpp"
#include "ypath/store.hpp"
