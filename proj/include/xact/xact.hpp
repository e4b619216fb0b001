#pragma once

#include "xact/data/jsonl.hpp"
#include "xact/data/shard.hpp"
#include "xact/data/split.hpp"
#include "xact/data/validate.hpp"
#include "xact/eval/metrics.hpp"
#include "xact/eval/predict.hpp"
#include "xact/nn/grad_check.hpp"
#include "xact/train/trainer.hpp"
#include "xact/xrd/pipeline.hpp"
#include "xact/xrd/synth.hpp"
