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

#include "corneafield/corneafield.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <new>
#include <string>

#include <json.hpp>

#include "errors.hpp"
#include "geometry.hpp"
#include "pipeline.hpp"
#include "render.hpp"
#include "training.hpp"

struct cf_model {
  cf::TrainState state;
};

struct cf_trainer {
  cf::TrainingSet data;
  cf::TrainState state;
};

namespace {

thread_local std::string g_last_error;

cf_status guarded(const std::function<void()>& body) {
  g_last_error.clear();
  try {
    body();
    return CF_OK;
  } catch (const cf::Error& e) {
    g_last_error = e.what();
    return static_cast<cf_status>(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = std::string("malformed JSON: ") + e.what();
    return CF_ERR_CONFIG;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CF_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CF_ERR_INTERNAL;
  }
}

template <typename T>
void need(const T* p, const char* name) {
  if (p == nullptr) throw cf::ArgumentError(std::string(name) + " must not be null");
}

cf::CorneaModel to_model(const cf_cornea_model* m) {
  need(m, "model");
  cf::CorneaModel out{m->eccentricity, m->apex_radius, m->base_radius};
  out.validate();
  return out;
}

cf::Vec3 vec(const double* v) { return cf::Vec3(v[0], v[1], v[2]); }

void put(const cf::Vec3& v, double* out) {
  out[0] = v.x();
  out[1] = v.y();
  out[2] = v.z();
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

cf_status run(const char* options_json, char** report,
              nlohmann::json (*command)(const cf::RunOptions&)) {
  if (report != nullptr) *report = nullptr;
  return guarded([&] {
    need(options_json, "options_json");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(options_json);
    } catch (const nlohmann::json::exception& e) {
      throw cf::ConfigError(std::string("options are not valid JSON: ") + e.what());
    }
    const nlohmann::json out = command(cf::RunOptions::from_json(j));
    if (report != nullptr) *report = dup_string(out.dump(2));
  });
}

}  // namespace

extern "C" {

const char* cf_version(void) { return "0.1.0"; }

const char* cf_last_error(void) { return g_last_error.c_str(); }

void cf_string_free(char* s) { std::free(s); }

void cf_cornea_model_default(cf_cornea_model* out) {
  if (out == nullptr) return;
  const cf::CorneaModel m;
  *out = {m.eccentricity, m.apex_radius, m.base_radius};
}

cf_status cf_cornea_apex_to_base(const cf_cornea_model* model, double* t_b) {
  return guarded([&] {
    need(t_b, "t_b");
    *t_b = to_model(model).apex_to_base();
  });
}

cf_status cf_surface_z(const cf_cornea_model* model, double r, double* z) {
  return guarded([&] {
    need(z, "z");
    *z = cf::surface_z(to_model(model), r);
  });
}

cf_status cf_surface_normal(const cf_cornea_model* model, const double point[3],
                            double normal[3]) {
  return guarded([&] {
    need(point, "point");
    need(normal, "normal");
    put(cf::surface_normal(to_model(model), vec(point)), normal);
  });
}

cf_status cf_intersect(const cf_cornea_model* model, const double origin[3],
                       const double direction[3], int* hit, double point[3], double normal[3],
                       double* t) {
  return guarded([&] {
    need(origin, "origin");
    need(direction, "direction");
    need(hit, "hit");
    if (!(std::abs(vec(direction).norm() - 1.0) <= 1e-9)) {
      throw cf::ArgumentError("intersect needs a unit-length ray direction");
    }
    const auto h = cf::intersect(to_model(model), cf::Ray{vec(origin), vec(direction)});
    *hit = h ? 1 : 0;
    if (!h) return;
    if (point != nullptr) put(h->point, point);
    if (normal != nullptr) put(h->normal, normal);
    if (t != nullptr) *t = h->t;
  });
}

cf_status cf_reflect(const double d[3], const double n[3], double out[3]) {
  return guarded([&] {
    need(d, "d");
    need(n, "n");
    need(out, "out");
    put(cf::reflect(vec(d), vec(n)), out);
  });
}

cf_status cf_depth_from_radius(const cf_cornea_model* model, double focal, double r_img,
                               double* depth) {
  return guarded([&] {
    need(depth, "depth");
    cf::CameraIntrinsics intr;
    intr.focal = focal;
    *depth = cf::depth_from_radius(to_model(model), intr, r_img);
  });
}

cf_status cf_model_load(const char* checkpoint_path, cf_model** out) {
  return guarded([&] {
    need(checkpoint_path, "checkpoint_path");
    need(out, "out");
    *out = nullptr;
    *out = new cf_model{cf::load_checkpoint(checkpoint_path)};
  });
}

void cf_model_free(cf_model* model) { delete model; }

cf_status cf_model_query(const cf_model* model, const double point[3], double* density,
                         double rgb[3]) {
  return guarded([&] {
    need(model, "model");
    need(point, "point");
    const cf::FieldSample s = model->state.scene.eval(vec(point));
    if (density != nullptr) *density = s.density;
    if (rgb != nullptr) put(s.color, rgb);
  });
}

cf_status cf_model_texture(const cf_model* model, double py, double px, double rgb[3]) {
  return guarded([&] {
    need(model, "model");
    need(rgb, "rgb");
    put(model->state.texture_color(cf::Vec2(py, px)), rgb);
  });
}

cf_status cf_model_render(const cf_model* model, const double eye[3], const double target[3],
                          double focal, int width, int height, double* rgb,
                          double* accumulation) {
  return guarded([&] {
    need(model, "model");
    need(eye, "eye");
    need(target, "target");
    need(rgb, "rgb");
    cf::CameraIntrinsics intr{focal, 0.5 * (width - 1), 0.5 * (height - 1), width, height};
    intr.validate();
    const cf::PinholeCamera cam = cf::PinholeCamera::look_at(intr, vec(eye), vec(target));
    const cf::FieldView v =
        cf::render_field_view(model->state.scene, cam, model->state.config.sampling);
    std::memcpy(rgb, v.color.data.data(), v.color.data.size() * sizeof(double));
    if (accumulation != nullptr) {
      std::memcpy(accumulation, v.accumulation.data.data(),
                  v.accumulation.data.size() * sizeof(double));
    }
  });
}

cf_status cf_trainer_create(const char* dataset, const char* config_json, cf_trainer** out) {
  return guarded([&] {
    need(dataset, "dataset");
    need(out, "out");
    *out = nullptr;
    cf::TrainConfig config;
    if (config_json != nullptr && config_json[0] != '\0') {
      config = cf::TrainConfig::from_json(config_json);
    }
    config.validate();
    cf::TrainingSet data = cf::load_training_set(dataset, config);
    if (data.frame_count() < 2) {
      throw cf::ArgumentError("training needs at least two frames");
    }
    cf::TrainState state = cf::TrainState::initialize(config, data);
    *out = new cf_trainer{std::move(data), std::move(state)};
  });
}

void cf_trainer_free(cf_trainer* trainer) { delete trainer; }

cf_status cf_trainer_step(cf_trainer* trainer, int steps, int64_t* step, double* recon,
                          double* radial) {
  return guarded([&] {
    need(trainer, "trainer");
    if (steps < 0) throw cf::ArgumentError("steps must be non-negative");
    cf::TrainState& s = trainer->state;
    const std::int64_t total = s.config.steps;
    s.config.steps = static_cast<int>(std::min<std::int64_t>(total, s.step + steps));
    cf::LossReport last;
    try {
      cf::fit_continue(s, trainer->data, [&](const cf::LossReport& r) { last = r; });
    } catch (...) {
      s.config.steps = static_cast<int>(total);
      throw;
    }
    s.config.steps = static_cast<int>(total);
    if (step != nullptr) *step = s.step;
    if (recon != nullptr) *recon = last.recon;
    if (radial != nullptr) *radial = last.radial;
  });
}

cf_status cf_trainer_save(const cf_trainer* trainer, const char* checkpoint_path) {
  return guarded([&] {
    need(trainer, "trainer");
    need(checkpoint_path, "checkpoint_path");
    cf::save_checkpoint(trainer->state, checkpoint_path);
  });
}

cf_status cf_run_synth(const char* options_json, char** report) {
  return run(options_json, report, &cf::cmd_synth);
}
cf_status cf_run_train(const char* options_json, char** report) {
  return run(options_json, report, &cf::cmd_train);
}
cf_status cf_run_render(const char* options_json, char** report) {
  return run(options_json, report, &cf::cmd_render);
}
cf_status cf_run_eval(const char* options_json, char** report) {
  return run(options_json, report, &cf::cmd_eval);
}
cf_status cf_run_ablate(const char* options_json, char** report) {
  return run(options_json, report, &cf::cmd_ablate);
}

}  // extern "C"
