// Copyright (c) 2026 The nldbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

namespace nldbench::io {

// Shortest form is not required; 17 significant digits always round-trip.
std::string format_real(double v);

// Appends "[v0,v1,...]" with 17 significant digits per entry.
void append_real_array(std::string& out, std::span<const double> values);

std::string read_file(const std::filesystem::path& path);

// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view content);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace nldbench::io
