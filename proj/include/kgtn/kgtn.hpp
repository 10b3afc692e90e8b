/**
 * Copyright 2026 The kgtn Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include "kgtn/config.hpp"
#include "kgtn/data.hpp"
#include "kgtn/denoise.hpp"
#include "kgtn/eval.hpp"
#include "kgtn/gradcheck.hpp"
#include "kgtn/intents.hpp"
#include "kgtn/metrics.hpp"
#include "kgtn/model.hpp"
#include "kgtn/ops.hpp"
#include "kgtn/tensor.hpp"
#include "kgtn/training.hpp"
