// Copyright (C) 2026 The sebox Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "sebox/app.hpp"
#include "sebox/box_engine.hpp"
#include "sebox/cache.hpp"
#include "sebox/error.hpp"
#include "sebox/file_set.hpp"
#include "sebox/macro_preprocessor.hpp"
#include "sebox/metrics_engine.hpp"
#include "sebox/policy_model.hpp"
#include "sebox/policy_parser.hpp"
#include "sebox/repo_miner.hpp"
#include "sebox/report.hpp"
