#pragma once

#include "mecheval/baseline/evaluate.hpp"
#include "mecheval/baseline/metrics.hpp"
#include "mecheval/core/error.hpp"
#include "mecheval/core/jsonl.hpp"
#include "mecheval/core/parallel.hpp"
#include "mecheval/core/random.hpp"
#include "mecheval/corruption/corpus.hpp"
#include "mecheval/corruption/generate.hpp"
#include "mecheval/corruption/pools.hpp"
#include "mecheval/corruption/prompt.hpp"
#include "mecheval/oracle/differential.hpp"
#include "mecheval/oracle/planted.hpp"
#include "mecheval/oracle/random_model.hpp"
#include "mecheval/oracle/reference.hpp"
#include "mecheval/patching/engine.hpp"
#include "mecheval/patching/profile.hpp"
#include "mecheval/patching/prompt_pair.hpp"
#include "mecheval/report/pipeline.hpp"
#include "mecheval/report/report.hpp"
#include "mecheval/rules/bootstrap.hpp"
#include "mecheval/rules/sweep.hpp"
#include "mecheval/rules/verifier.hpp"
#include "mecheval/runtime/config.hpp"
#include "mecheval/runtime/forward.hpp"
#include "mecheval/runtime/model.hpp"
#include "mecheval/runtime/model_dir.hpp"
#include "mecheval/runtime/tensor_archive.hpp"
#include "mecheval/runtime/tokenizer.hpp"
