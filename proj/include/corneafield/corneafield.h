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

#ifndef CORNEAFIELD_CORNEAFIELD_H_
#define CORNEAFIELD_CORNEAFIELD_H_

/* C interface to the corneal-reflection radiance field library.
 *
 * Every fallible call returns a cf_status. On failure a human-readable
 * message is available from cf_last_error() on the calling thread until the
 * next call on that thread. Strings returned through char** out-parameters
 * are owned by the caller and must be released with cf_string_free().
 *
 * Canonical cornea frame: apex at the origin, apex normal (0, 0, -1), the
 * section opening toward +z up to the limbus plane z = t_b. Lengths in mm.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CF_API __declspec(dllexport)
#else
#define CF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cf_status {
  CF_OK = 0,
  CF_ERR_ARGUMENT = 1,
  CF_ERR_CONFIG = 2,
  CF_ERR_IO = 3,
  CF_ERR_NUMERIC = 4,
  CF_ERR_GEOMETRY = 5,
  CF_ERR_STATE = 6,
  CF_ERR_INTERNAL = 7
} cf_status;

typedef struct cf_cornea_model {
  double eccentricity;
  double apex_radius;
  double base_radius;
} cf_cornea_model;

typedef struct cf_model cf_model;     /* trained field, loaded from a checkpoint */
typedef struct cf_trainer cf_trainer; /* in-progress optimization */

CF_API const char* cf_version(void);
CF_API const char* cf_last_error(void);
CF_API void cf_string_free(char* s);

/* Geometry. */
CF_API void cf_cornea_model_default(cf_cornea_model* out);
CF_API cf_status cf_cornea_apex_to_base(const cf_cornea_model* model, double* t_b);
CF_API cf_status cf_surface_z(const cf_cornea_model* model, double r, double* z);
CF_API cf_status cf_surface_normal(const cf_cornea_model* model, const double point[3],
                                   double normal[3]);
/* Canonical-frame intersection. *hit is 0 on a miss, 1 otherwise; on a hit
 * point, normal, and the ray parameter t are filled. */
CF_API cf_status cf_intersect(const cf_cornea_model* model, const double origin[3],
                              const double direction[3], int* hit, double point[3],
                              double normal[3], double* t);
CF_API cf_status cf_reflect(const double d[3], const double n[3], double out[3]);
CF_API cf_status cf_depth_from_radius(const cf_cornea_model* model, double focal,
                                      double r_img, double* depth);

/* Trained models. */
CF_API cf_status cf_model_load(const char* checkpoint_path, cf_model** out);
CF_API void cf_model_free(cf_model* model);
/* Activated density and color at a world point (zero outside the grid). */
CF_API cf_status cf_model_query(const cf_model* model, const double point[3], double* density,
                                double rgb[3]);
/* Learned iris texture at disk coordinate (py, px), |p| <= 1. */
CF_API cf_status cf_model_texture(const cf_model* model, double py, double px, double rgb[3]);
/* Renders a view from eye toward target with a pinhole camera. rgb receives
 * height*width*3 doubles row-major; accumulation (optional) height*width. */
CF_API cf_status cf_model_render(const cf_model* model, const double eye[3],
                                 const double target[3], double focal, int width, int height,
                                 double* rgb, double* accumulation);

/* Training. config_json may be NULL or "" for defaults. */
CF_API cf_status cf_trainer_create(const char* dataset, const char* config_json,
                                   cf_trainer** out);
CF_API void cf_trainer_free(cf_trainer* trainer);
/* Runs up to `steps` further steps (never past the configured total). The
 * losses of the last step run are written when the pointers are non-null. */
CF_API cf_status cf_trainer_step(cf_trainer* trainer, int steps, int64_t* step,
                                 double* recon, double* radial);
CF_API cf_status cf_trainer_save(const cf_trainer* trainer, const char* checkpoint_path);

/* Command-level entry points. options_json is an object with the keys
 * config, dataset, out, checkpoint, seed, noise, steps, no_texture,
 * no_pose_opt, no_radial, ground_truth_poses, orbit, eye, target, quiet.
 * On success *report receives a JSON report (may be NULL to discard). */
CF_API cf_status cf_run_synth(const char* options_json, char** report);
CF_API cf_status cf_run_train(const char* options_json, char** report);
CF_API cf_status cf_run_render(const char* options_json, char** report);
CF_API cf_status cf_run_eval(const char* options_json, char** report);
CF_API cf_status cf_run_ablate(const char* options_json, char** report);

#ifdef __cplusplus
}
#endif

#endif /* CORNEAFIELD_CORNEAFIELD_H_ */
