// Copyright 2026 The CacheFed Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <nlohmann/json.hpp>

#include "cachefed/fed_runtime.hpp"

namespace cachefed {

using Json = nlohmann::ordered_json;

void to_json(Json& j, const RoundLog& r);
void from_json(const Json& j, RoundLog& r);

void to_json(Json& j, const FederationConfig& c);
void from_json(const Json& j, FederationConfig& c);

void to_json(Json& j, const SynthSpec& s);
void from_json(const Json& j, SynthSpec& s);

void to_json(Json& j, const PartitionSpec& s);
void from_json(const Json& j, PartitionSpec& s);

}  // namespace cachefed
