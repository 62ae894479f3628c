// SPDX-License-Identifier: Apache-2.0
#include "eqdp/eqdp.h"

#include <cstring>
#include <memory>
#include <string>

#include "eqdp/data.hpp"
#include "eqdp/dp.hpp"
#include "eqdp/error.hpp"
#include "eqdp/harness.hpp"
#include "eqdp/metrics.hpp"
#include "eqdp/model.hpp"

struct eqdp_model {
  eqdp::Model model;
};

struct eqdp_dataset {
  eqdp::Dataset data;
};

namespace {

thread_local std::string last_error;

eqdp_status to_status(eqdp::ErrorCode code) { return static_cast<eqdp_status>(static_cast<int>(code)); }

template <typename Fn>
eqdp_status guarded(Fn&& fn) {
  try {
    last_error.clear();
    fn();
    return EQDP_OK;
  } catch (const eqdp::Error& e) {
    last_error = e.what();
    return to_status(e.code());
  } catch (const nlohmann::json::exception& e) {
    last_error = e.what();
    return EQDP_ERR_FORMAT;
  } catch (const std::exception& e) {
    last_error = e.what();
    return EQDP_ERR_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return EQDP_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  eqdp::require(p != nullptr, eqdp::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

char* duplicate(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* eqdp_version(void) { return "0.1.0"; }

const char* eqdp_status_name(eqdp_status status) {
  if (status == EQDP_OK) return "ok";
  if (status == EQDP_ERR_INTERNAL) return "internal-error";
  if (status >= EQDP_ERR_INVALID_ARGUMENT && status <= EQDP_ERR_IO)
    return eqdp::error_code_name(static_cast<eqdp::ErrorCode>(status)).data();
  return "unknown";
}

const char* eqdp_last_error(void) { return last_error.c_str(); }

void eqdp_string_free(char* text) { std::free(text); }

eqdp_status eqdp_rdp_sgm(double q, double sigma, const double* orders, size_t count, double* values) {
  return guarded([&] {
    need(orders, "orders");
    need(values, "values");
    const auto curve = eqdp::rdp_sgm(q, sigma, std::span<const double>(orders, count));
    std::copy(curve.values.begin(), curve.values.end(), values);
  });
}

eqdp_status eqdp_epsilon(double q, double sigma, double steps, double delta, double* epsilon,
                         double* order) {
  return guarded([&] {
    need(epsilon, "epsilon");
    const auto r = eqdp::epsilon_spent(q, sigma, steps, delta);
    *epsilon = r.epsilon;
    if (order) *order = r.order;
  });
}

eqdp_status eqdp_calibrate_sigma(double target_epsilon, double delta, double q, double steps,
                                 double* sigma) {
  return guarded([&] {
    need(sigma, "sigma");
    *sigma = eqdp::calibrate_sigma(target_epsilon, delta, q, steps);
  });
}

eqdp_status eqdp_model_build(const char* group, const int widths[3], int classes,
                             const char* width_mode, int restriction, eqdp_model** out) {
  return guarded([&] {
    need(group, "group");
    need(out, "out");
    eqdp::ModelSpec spec;
    spec.group = eqdp::GroupSpec::parse(group);
    if (widths) spec.widths = {widths[0], widths[1], widths[2]};
    spec.classes = classes;
    if (width_mode) spec.width_mode = eqdp::parse_width_mode(width_mode);
    spec.restriction = restriction != 0;
    *out = new eqdp_model{eqdp::build_resnet9(spec)};
  });
}

eqdp_status eqdp_model_load(const char* checkpoint_dir, eqdp_model** out) {
  return guarded([&] {
    need(checkpoint_dir, "checkpoint_dir");
    need(out, "out");
    *out = new eqdp_model{eqdp::load_checkpoint(checkpoint_dir)};
  });
}

eqdp_status eqdp_model_save(const eqdp_model* model, const char* checkpoint_dir) {
  return guarded([&] {
    need(model, "model");
    need(checkpoint_dir, "checkpoint_dir");
    eqdp::save_checkpoint(model->model, checkpoint_dir);
  });
}

void eqdp_model_free(eqdp_model* model) { delete model; }

eqdp_status eqdp_model_initialize(eqdp_model* model, uint64_t seed) {
  return guarded([&] {
    need(model, "model");
    model->model.initialize(seed);
  });
}

eqdp_status eqdp_model_param_count(const eqdp_model* model, size_t* count) {
  return guarded([&] {
    need(model, "model");
    need(count, "count");
    *count = model->model.param_count();
  });
}

eqdp_status eqdp_model_classes(const eqdp_model* model, int* classes) {
  return guarded([&] {
    need(model, "model");
    need(classes, "classes");
    *classes = model->model.classes();
  });
}

eqdp_status eqdp_model_get_params(const eqdp_model* model, float* out, size_t count) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    const auto p = model->model.params();
    eqdp::require(count == p.size(), eqdp::ErrorCode::kLayoutMismatch, "parameter buffer size mismatch");
    std::copy(p.begin(), p.end(), out);
  });
}

eqdp_status eqdp_model_set_params(eqdp_model* model, const float* values, size_t count) {
  return guarded([&] {
    need(model, "model");
    need(values, "values");
    std::vector<eqdp::Real> p(values, values + count);
    model->model.set_params(p);
  });
}

eqdp_status eqdp_model_forward(const eqdp_model* model, const float* x, int batch, int height,
                               int width, float* logits) {
  return guarded([&] {
    need(model, "model");
    need(x, "x");
    need(logits, "logits");
    eqdp::require(batch >= 0 && height > 0 && width > 0, eqdp::ErrorCode::kInvalidArgument,
                  "bad input shape");
    eqdp::GeometricTensor input(batch, model->model.input_type(), height, width);
    std::copy(x, x + input.data().size(), input.data().begin());
    const auto out = eqdp::forward(model->model, input);
    std::copy(out.values.begin(), out.values.end(), logits);
  });
}

eqdp_status eqdp_model_fir(const eqdp_model* model, char** json) {
  return guarded([&] {
    need(model, "model");
    need(json, "json");
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : eqdp::fir_probe(model->model))
      arr.push_back({{"layer", e.layer}, {"magnitude", e.magnitude}});
    *json = duplicate(arr.dump());
  });
}

eqdp_status eqdp_dataset_load(const char* dir, const char* split, int expected_classes,
                              eqdp_dataset** out) {
  return guarded([&] {
    need(dir, "dir");
    need(out, "out");
    const auto s = eqdp::parse_split(split ? split : "train");
    *out = new eqdp_dataset{eqdp::load_dataset(dir, s, expected_classes)};
  });
}

void eqdp_dataset_free(eqdp_dataset* data) { delete data; }

eqdp_status eqdp_dataset_info(const eqdp_dataset* data, int* size, int* classes) {
  return guarded([&] {
    need(data, "data");
    if (size) *size = data->data.size();
    if (classes) *classes = data->data.classes;
  });
}

eqdp_status eqdp_evaluate(const eqdp_model* model, const eqdp_dataset* data, int threads, char** json) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(json, "json");
    const auto r = eqdp::evaluate(model->model, data->data, threads);
    *json = duplicate(nlohmann::json{{"count", r.count}, {"accuracy", r.accuracy},
                                     {"brier", r.brier}, {"loss", r.loss}}
                          .dump());
  });
}

eqdp_status eqdp_explain(const eqdp_model* model, const eqdp_dataset* data, int index,
                         const char* method, int target_class, const char* pgm_path, char** json) {
  return guarded([&] {
    need(model, "model");
    need(data, "data");
    need(method, "method");
    eqdp::require(index >= 0 && index < data->data.size(), eqdp::ErrorCode::kInvalidArgument,
                  "image index " + std::to_string(index) + " out of range");
    const std::string m(method);
    eqdp::require(m == "gradcam" || m == "guided", eqdp::ErrorCode::kInvalidArgument,
                  "method must be gradcam or guided");
    const auto image = eqdp::normalize_image(data->data.image(index));
    const int cls = target_class >= 0 ? target_class : data->data.labels[index];
    const auto map = m == "gradcam" ? eqdp::grad_cam(model->model, image, cls)
                                    : eqdp::guided_backprop(model->model, image, cls);
    if (pgm_path) eqdp::write_heatmap(pgm_path, map);
    if (json) {
      const auto logits = model->model.forward_sample(image);
      *json = duplicate(nlohmann::json{{"method", m},
                                       {"class", cls},
                                       {"predicted", eqdp::argmax(logits.data())},
                                       {"min", map.raw_min},
                                       {"max", map.raw_max},
                                       {"values", map.values}}
                            .dump());
    }
  });
}

eqdp_status eqdp_train(const char* config_json, char** manifest_json) {
  bool truncated = false;
  const eqdp_status status = guarded([&] {
    need(config_json, "config_json");
    const auto config = eqdp::config_from_json(nlohmann::json::parse(config_json));
    const auto manifest = eqdp::run_training(config);
    truncated = manifest.truncated;
    if (manifest_json) *manifest_json = duplicate(eqdp::to_json(manifest).dump());
  });
  if (status == EQDP_OK && truncated) {
    last_error = "privacy budget exhausted before the planned step count";
    return EQDP_ERR_BUDGET_EXHAUSTED;
  }
  return status;
}

eqdp_status eqdp_grid(const char* config_dir, const char* summary_dir, char** rows_json) {
  return guarded([&] {
    need(config_dir, "config_dir");
    need(summary_dir, "summary_dir");
    const auto rows = eqdp::run_grid(eqdp::load_config_dir(config_dir), summary_dir);
    if (rows_json) {
      nlohmann::json arr = nlohmann::json::array();
      for (const auto& r : rows)
        arr.push_back({{"dataset", r.dataset}, {"group", r.group}, {"augmentation", r.augmentation},
                       {"dp", r.dp}, {"seed", r.seed}, {"val_accuracy", r.val_accuracy},
                       {"params", r.params}, {"brier", r.brier}, {"mean_sparsity", r.mean_sparsity},
                       {"status", r.status}, {"message", r.message}});
      *rows_json = duplicate(arr.dump());
    }
  });
}

}  // extern "C"
