// Copyright 2026 The medvqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MEDVQA_MEDVQA_HPP_
#define MEDVQA_MEDVQA_HPP_

#include "medvqa/core/autograd.hpp"
#include "medvqa/core/error.hpp"
#include "medvqa/core/rng.hpp"
#include "medvqa/core/tensor.hpp"
#include "medvqa/clip/backbone.hpp"
#include "medvqa/clip/contrastive.hpp"
#include "medvqa/clip/pretrain.hpp"
#include "medvqa/cli/config.hpp"
#include "medvqa/data/caption_corpus.hpp"
#include "medvqa/data/records.hpp"
#include "medvqa/data/tokenizer.hpp"
#include "medvqa/data/vqa_dataset.hpp"
#include "medvqa/harness/experiment.hpp"
#include "medvqa/harness/metrics.hpp"
#include "medvqa/image/image.hpp"
#include "medvqa/io/checkpoint.hpp"
#include "medvqa/io/csv.hpp"
#include "medvqa/nn/adam.hpp"
#include "medvqa/nn/module.hpp"
#include "medvqa/vqa/ban.hpp"
#include "medvqa/vqa/cdae.hpp"
#include "medvqa/vqa/losses.hpp"
#include "medvqa/vqa/model.hpp"
#include "medvqa/vqa/question_encoder.hpp"

#endif  // MEDVQA_MEDVQA_HPP_
