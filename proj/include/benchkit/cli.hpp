/*
 * Copyright 2026 The benchkit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <ostream>

namespace benchkit::cli {

/// benchkit run | proxy | stub | scenarios | report.
/// Exit codes: 0 success, 1 usage, config or I/O error, 2 run finished with
/// failed or partial cells.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Makes a running "proxy" or "stub" command return. Safe from a signal handler.
void request_stop() noexcept;
/// True while a "proxy" or "stub" command is serving.
bool serving() noexcept;

}  // namespace benchkit::cli
