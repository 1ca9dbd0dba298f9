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

#include "render.hpp"

namespace cf {

FieldView render_field_view(const SceneField& field, const PinholeCamera& camera,
                            const SamplingSpec& sampling) {
  const CameraIntrinsics& in = camera.intrinsics;
  FieldView view{Image(in.width, in.height, 3), Image(in.width, in.height, 1)};
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      const Ray r = camera.ray(y, x);
      const RenderResult rr = volume_render(field, r.origin, r.direction, sampling);
      for (int c = 0; c < 3; ++c) view.color.at(y, x, c) = rr.color[c];
      view.accumulation.at(y, x, 0) = rr.accumulation;
    }
  }
  return view;
}

}  // namespace cf
