// Copyright 2026 The CorneaField Authors.
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

#pragma once

#include "fields.hpp"
#include "image.hpp"

namespace cf {

struct FieldView {
  Image color;         // 3 channels
  Image accumulation;  // 1 channel
};

// Direct (unreflected) render of a learned scene field from a pinhole camera,
// sampling at bin centers over the given bounds.
FieldView render_field_view(const SceneField& field, const PinholeCamera& camera,
                            const SamplingSpec& sampling);

}  // namespace cf
