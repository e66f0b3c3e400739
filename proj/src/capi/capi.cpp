// C API shim: translates between opaque handles / status codes and the C++
// engine. All exceptions stop here.

#include "momentflow/momentflow.h"

#include <cstring>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "core/activation_stats.hpp"
#include "core/common.hpp"
#include "core/container_io.hpp"
#include "core/error_grid.hpp"
#include "core/network.hpp"
#include "core/oracle.hpp"
#include "core/propagation.hpp"
#include "core/rng.hpp"

using namespace momentflow;

struct mf_network {
  NetworkSpec spec;
};

struct mf_moments {
  GaussianMoments moments;
};

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

mf_status to_status(Status s) { return static_cast<mf_status>(static_cast<int>(s)); }

template <typename F>
mf_status guarded(F&& f) {
  try {
    f();
    return MF_OK;
  } catch (const Error& e) {
    set_error(e.what());
    return to_status(e.status());
  } catch (const std::bad_alloc&) {
    set_error("out of memory");
    return MF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    set_error(e.what());
    return MF_ERR_INTERNAL;
  } catch (...) {
    set_error("unknown error");
    return MF_ERR_INTERNAL;
  }
}

ActivationKind to_kind(mf_activation act) {
  switch (act.kind) {
    case MF_ACT_HEAVISIDE: return ActivationKind::heaviside();
    case MF_ACT_RELU: return ActivationKind::relu();
    case MF_ACT_GELU: return ActivationKind::gelu();
    case MF_ACT_SIGMOID:
      return ActivationKind::sigmoid_approx(act.alpha > 0.0 ? act.alpha
                                                            : kDefaultSigmoidAlpha);
    case MF_ACT_IDENTITY: return ActivationKind::identity();
  }
  fail(Status::invalid_argument, "unknown activation kind value");
}

SeriesConfig to_series(const mf_series_config* cfg) {
  if (!cfg) return SeriesConfig{};
  require(cfg->order >= 1, Status::invalid_argument, "series order must be >= 1");
  require(cfg->sigma_floor >= 0.0, Status::invalid_argument,
          "sigma_floor must be >= 0");
  SeriesConfig out;
  out.order = cfg->order;
  out.sigma_floor = cfg->sigma_floor;
  switch (cfg->psd_policy) {
    case MF_PSD_NONE: out.psd_policy = PsdPolicy::none; break;
    case MF_PSD_SYMMETRIZE: out.psd_policy = PsdPolicy::symmetrize; break;
    case MF_PSD_CLIP_EIGENVALUES: out.psd_policy = PsdPolicy::clip_eigenvalues; break;
    default: fail(Status::invalid_argument, "unknown psd policy value");
  }
  return out;
}

QuadratureConfig to_quad(const mf_quad_config* cfg) {
  if (!cfg) return QuadratureConfig{};
  QuadratureConfig out;
  out.nodes_per_axis = cfg->nodes_per_axis;
  switch (cfg->scheme) {
    case MF_QUAD_GAUSS_HERMITE: out.scheme = QuadScheme::gauss_hermite; break;
    case MF_QUAD_GAUSS_HERMITE_SPLIT:
      out.scheme = QuadScheme::gauss_hermite_split; break;
    default: fail(Status::invalid_argument, "unknown quadrature scheme value");
  }
  return out;
}

McConfig to_mc(const mf_mc_config* cfg) {
  if (!cfg) return McConfig{};
  McConfig out;
  out.samples = cfg->samples;
  out.seed = cfg->seed;
  out.chunk = cfg->chunk;
  return out;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void require_out(const void* p) {
  require(p != nullptr, Status::invalid_argument, "output pointer is null");
}

nlohmann::json describe_network(const NetworkSpec& net) {
  nlohmann::json j;
  j["input_dim"] = net.input_dim;
  j["output_dim"] = net.output_dim();
  j["name"] = net.metadata.name;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers) {
    if (const auto* d = std::get_if<DenseLayer>(&layer)) {
      layers.push_back({{"type", "dense"}, {"in", d->W.cols()}, {"out", d->W.rows()}});
    } else if (const auto* c = std::get_if<Conv2dLayer>(&layer)) {
      const auto out = c->kernel.output_shape();
      layers.push_back({{"type", "conv2d"},
                        {"out_ch", c->kernel.out_ch},
                        {"kh", c->kernel.kh},
                        {"kw", c->kernel.kw},
                        {"stride", c->kernel.stride},
                        {"padding", c->kernel.padding == Padding::same ? "same" : "valid"},
                        {"output_shape", {out.h, out.w, out.c}}});
    } else if (const auto* a = std::get_if<ActivationLayer>(&layer)) {
      layers.push_back({{"type", "activation"}, {"kind", a->kind.name()}});
    } else {
      layers.push_back({{"type", "flatten"}});
    }
  }
  j["layers"] = std::move(layers);
  return j;
}

}  // namespace

extern "C" {

const char* mf_version(void) { return "1.0.0"; }

const char* mf_last_error(void) { return g_last_error.c_str(); }

void mf_string_free(char* s) { delete[] s; }

mf_series_config mf_series_config_default(void) {
  return {4, kDefaultSigmaFloor, MF_PSD_SYMMETRIZE};
}

mf_quad_config mf_quad_config_default(void) {
  return {60, MF_QUAD_GAUSS_HERMITE_SPLIT};
}

mf_mc_config mf_mc_config_default(void) { return {20000, 0, 4096}; }

mf_status mf_activation_mean(mf_activation act, double mu, double sigma,
                             double* out) {
  return guarded([&] {
    require_out(out);
    *out = activation_mean(to_kind(act), {mu, sigma});
  });
}

mf_status mf_activation_variance(mf_activation act, double mu, double sigma,
                                 const mf_series_config* cfg, double* out) {
  return guarded([&] {
    require_out(out);
    *out = activation_variance(to_kind(act), {mu, sigma}, to_series(cfg));
  });
}

mf_status mf_derivative_term(mf_activation act, double mu, double sigma, int k,
                             double* out) {
  return guarded([&] {
    require_out(out);
    *out = derivative_term(to_kind(act), {mu, sigma}, k);
  });
}

mf_status mf_pair_covariance(mf_activation act_a, mf_activation act_b,
                             double mu_i, double mu_j, double sigma_i,
                             double sigma_j, double rho,
                             const mf_series_config* cfg, double* out) {
  return guarded([&] {
    require_out(out);
    CorrelatedPair pair{{mu_i, sigma_i}, {mu_j, sigma_j}, rho};
    *out = pair_covariance(to_kind(act_a), to_kind(act_b), pair, to_series(cfg));
  });
}

mf_status mf_quad_mean(mf_activation act, double mu, double sigma,
                       const mf_quad_config* cfg, double* out) {
  return guarded([&] {
    require_out(out);
    *out = quad_mean(to_kind(act), {mu, sigma}, to_quad(cfg));
  });
}

mf_status mf_quad_variance(mf_activation act, double mu, double sigma,
                           const mf_quad_config* cfg, double* out) {
  return guarded([&] {
    require_out(out);
    *out = quad_variance(to_kind(act), {mu, sigma}, to_quad(cfg));
  });
}

mf_status mf_quad_cross_moment(mf_activation act_a, mf_activation act_b,
                               double mu_i, double mu_j, double sigma_i,
                               double sigma_j, double rho,
                               const mf_quad_config* cfg, double* cross_moment,
                               double* covariance) {
  return guarded([&] {
    CorrelatedPair pair{{mu_i, sigma_i}, {mu_j, sigma_j}, rho};
    const CrossMomentResult r =
        quad_cross_moment(to_kind(act_a), to_kind(act_b), pair, to_quad(cfg));
    if (cross_moment) *cross_moment = r.cross_moment;
    if (covariance) *covariance = r.covariance;
  });
}

mf_status mf_moments_create(int dim, const double* mean,
                            const double* cov_row_major, mf_moments** out) {
  return guarded([&] {
    require_out(out);
    require(dim >= 1, Status::invalid_argument, "dim must be >= 1");
    require(mean && cov_row_major, Status::invalid_argument,
            "mean/cov pointers must not be null");
    auto m = std::make_unique<mf_moments>();
    m->moments.mean = Eigen::Map<const Eigen::VectorXd>(mean, dim);
    m->moments.cov.resize(dim, dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j)
        m->moments.cov(i, j) = cov_row_major[static_cast<std::size_t>(i) * dim + j];
    m->moments.validate();
    *out = m.release();
  });
}

void mf_moments_free(mf_moments* m) { delete m; }

int mf_moments_dim(const mf_moments* m) { return m ? m->moments.dim() : 0; }

mf_status mf_moments_get(const mf_moments* m, double* mean_out,
                         double* cov_row_major_out) {
  return guarded([&] {
    require(m != nullptr, Status::invalid_argument, "moments handle is null");
    const int n = m->moments.dim();
    if (mean_out) {
      for (int i = 0; i < n; ++i) mean_out[i] = m->moments.mean(i);
    }
    if (cov_row_major_out) {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
          cov_row_major_out[static_cast<std::size_t>(i) * n + j] = m->moments.cov(i, j);
    }
  });
}

mf_status mf_moments_load(const char* path, mf_moments** out) {
  return guarded([&] {
    require_out(out);
    require(path != nullptr, Status::invalid_argument, "path is null");
    auto m = std::make_unique<mf_moments>();
    m->moments = load_moments(path);
    *out = m.release();
  });
}

mf_status mf_moments_save(const mf_moments* m, const char* path) {
  return guarded([&] {
    require(m != nullptr && path != nullptr, Status::invalid_argument,
            "moments handle and path must not be null");
    save_moments(m->moments, path);
  });
}

mf_status mf_moments_random(int dim, uint64_t seed, double max_variance,
                            mf_moments** out) {
  return guarded([&] {
    require_out(out);
    require(dim >= 1, Status::invalid_argument, "dim must be >= 1");
    auto m = std::make_unique<mf_moments>();
    Rng rng(derive_seed(seed, 0x6d65616eULL));
    m->moments.mean.resize(dim);
    for (int i = 0; i < dim; ++i) m->moments.mean(i) = rng.normal();
    m->moments.cov = random_covariance({seed, dim, max_variance});
    *out = m.release();
  });
}

mf_status mf_network_load(const char* path, mf_network** out) {
  return guarded([&] {
    require_out(out);
    require(path != nullptr, Status::invalid_argument, "path is null");
    auto net = std::make_unique<mf_network>();
    net->spec = load_network(path);
    *out = net.release();
  });
}

mf_status mf_network_save(const mf_network* net, const char* path) {
  return guarded([&] {
    require(net != nullptr && path != nullptr, Status::invalid_argument,
            "network handle and path must not be null");
    save_network(net->spec, path);
  });
}

void mf_network_free(mf_network* net) { delete net; }

int mf_network_input_dim(const mf_network* net) {
  return net ? net->spec.input_dim : 0;
}

int mf_network_output_dim(const mf_network* net) {
  return net ? net->spec.output_dim() : 0;
}

int mf_network_layer_count(const mf_network* net) {
  return net ? static_cast<int>(net->spec.layers.size()) : 0;
}

mf_status mf_network_describe(const mf_network* net, char** json_out) {
  return guarded([&] {
    require(net != nullptr, Status::invalid_argument, "network handle is null");
    require_out(json_out);
    *json_out = dup_string(describe_network(net->spec).dump());
  });
}

mf_status mf_network_validate(const mf_network* net, char** json_out) {
  return guarded([&] {
    require(net != nullptr, Status::invalid_argument, "network handle is null");
    require_out(json_out);
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : validate_network(net->spec)) {
      arr.push_back({{"layer_index", d.layer_index},
                     {"code", d.code},
                     {"message", d.message}});
    }
    *json_out = dup_string(arr.dump());
  });
}

mf_status mf_network_synthesize_fc(int depth, int width, int input_dim,
                                   mf_activation act, uint64_t seed,
                                   mf_network** out) {
  return guarded([&] {
    require_out(out);
    SynthConfig cfg;
    cfg.family = Family::fc;
    cfg.depth = depth;
    cfg.width = width;
    cfg.input_dim = input_dim;
    cfg.activation = to_kind(act);
    cfg.seed = seed;
    auto net = std::make_unique<mf_network>();
    net->spec = synthesize(cfg);
    *out = net.release();
  });
}

mf_status mf_network_synthesize_cnn(int depth, int channels, int input_h,
                                    int input_w, int input_c,
                                    mf_activation act, uint64_t seed,
                                    mf_network** out) {
  return guarded([&] {
    require_out(out);
    SynthConfig cfg;
    cfg.family = Family::cnn;
    cfg.depth = depth;
    cfg.channels = channels;
    cfg.input = ConvShape{input_h, input_w, input_c};
    cfg.activation = to_kind(act);
    cfg.seed = seed;
    auto net = std::make_unique<mf_network>();
    net->spec = synthesize(cfg);
    *out = net.release();
  });
}

mf_status mf_propagate(const mf_network* net, const mf_moments* input,
                       const mf_series_config* cfg, mf_moments** out) {
  return guarded([&] {
    require(net != nullptr && input != nullptr, Status::invalid_argument,
            "network and input handles must not be null");
    require_out(out);
    auto m = std::make_unique<mf_moments>();
    m->moments = propagate(net->spec, input->moments, to_series(cfg));
    *out = m.release();
  });
}

mf_status mf_propagate_trace(const mf_network* net, const mf_moments* input,
                             const mf_series_config* cfg,
                             const char* trace_path, mf_moments** out) {
  return guarded([&] {
    require(net != nullptr && input != nullptr && trace_path != nullptr,
            Status::invalid_argument, "handles and trace path must not be null");
    require_out(out);
    PropagationTrace trace;
    auto m = std::make_unique<mf_moments>();
    m->moments = propagate(net->spec, input->moments, to_series(cfg), &trace);
    save_trace(trace, trace_path);
    *out = m.release();
  });
}

mf_status mf_mc_propagate(const mf_network* net, const mf_moments* input,
                          const mf_mc_config* cfg, mf_moments** estimate_out,
                          double* standard_error_out) {
  return guarded([&] {
    require(net != nullptr && input != nullptr, Status::invalid_argument,
            "network and input handles must not be null");
    require_out(estimate_out);
    const MomentEstimate est = mc_propagate(net->spec, input->moments, to_mc(cfg));
    auto m = std::make_unique<mf_moments>();
    m->moments.mean = est.mean;
    m->moments.cov = est.cov;
    if (standard_error_out) {
      for (Eigen::Index i = 0; i < est.standard_error.size(); ++i) {
        standard_error_out[i] = est.standard_error(i);
      }
    }
    *estimate_out = m.release();
  });
}

mf_status mf_error_grid(const mf_error_grid_spec* spec, double* max_abs_error,
                        double* mean_abs_error) {
  return guarded([&] {
    require(spec != nullptr, Status::invalid_argument, "spec is null");
    require(spec->orders != nullptr && spec->n_orders >= 1,
            Status::invalid_argument, "orders must be provided");
    require(max_abs_error != nullptr && mean_abs_error != nullptr,
            Status::invalid_argument, "output arrays must not be null");
    ErrorGridSpec s;
    s.kind = to_kind(spec->act);
    s.mu_min = spec->mu_min;
    s.mu_max = spec->mu_max;
    s.mu_step = spec->mu_step;
    s.sigma_i = spec->sigma_i;
    s.sigma_j = spec->sigma_j;
    s.rho = spec->rho;
    s.orders.assign(spec->orders, spec->orders + spec->n_orders);
    s.quad = to_quad(&spec->quad);
    s.keep_cells = spec->csv_path != nullptr;
    const ErrorGridReport report = error_grid(s);
    for (int i = 0; i < spec->n_orders; ++i) {
      max_abs_error[i] = report.max_abs_error[static_cast<std::size_t>(i)];
      mean_abs_error[i] = report.mean_abs_error[static_cast<std::size_t>(i)];
    }
    if (spec->csv_path) write_error_grid_csv(report, spec->csv_path);
  });
}

mf_status mf_tightness(const mf_network* net, const mf_tightness_spec* spec,
                       mf_tightness_output* outputs) {
  return guarded([&] {
    require(net != nullptr && spec != nullptr && outputs != nullptr,
            Status::invalid_argument, "arguments must not be null");
    TightnessConfig cfg;
    cfg.trials = spec->trials;
    cfg.mc = to_mc(&spec->mc);
    cfg.series = to_series(&spec->series);
    cfg.input_seed = spec->input_seed;
    cfg.max_variance = spec->max_variance;
    const TightnessReport report = tightness(net->spec, cfg);
    for (std::size_t d = 0; d < report.outputs.size(); ++d) {
      const auto& o = report.outputs[d];
      outputs[d] = {o.q_mu_mean, o.q_mu_std, o.q_var_mean,
                    o.q_var_std, o.excluded_mu, o.excluded_var};
    }
    if (spec->csv_path) write_tightness_csv(report, spec->csv_path);
    if (spec->json_path) write_tightness_json(report, spec->json_path);
  });
}

}  // extern "C"
