#pragma once

#include "sar/agreement.hpp"
#include "sar/corpus.hpp"
#include "sar/crf.hpp"
#include "sar/eval.hpp"
#include "sar/maxent.hpp"
#include "sar/model_io.hpp"
#include "sar/pipeline.hpp"
#include "sar/prob.hpp"
#include "sar/synth.hpp"
#include "sar/trainer.hpp"
