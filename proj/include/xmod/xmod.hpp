#pragma once

#include "xmod/affinity.hpp"
#include "xmod/baselines.hpp"
#include "xmod/clustering.hpp"
#include "xmod/core.hpp"
#include "xmod/eval.hpp"
#include "xmod/io.hpp"
#include "xmod/losses.hpp"
#include "xmod/mult.hpp"
#include "xmod/pipeline.hpp"
#include "xmod/synth.hpp"
#include "xmod/transport.hpp"
