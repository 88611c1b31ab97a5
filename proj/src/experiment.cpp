#include "gammalab/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "gammalab/curvature.hpp"
#include "gammalab/gauss.hpp"
#include "gammalab/semigroup.hpp"

#ifndef GAMMALAB_VERSION
#define GAMMALAB_VERSION "0.0.0"
#endif

namespace gammalab {

using json = nlohmann::ordered_json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Small parsing helpers

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    parts.push_back(text.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

std::optional<double> to_double(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text == "inf" || text == "+inf") return kInf;
  if (text == "-inf") return -kInf;
  double value = 0.0;
  const char* first = text.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

std::optional<std::uint64_t> to_unsigned(std::string_view text) {
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
  return value;
}

double require_double(std::string_view text, std::string_view what) {
  const auto value = to_double(text);
  if (!value || std::isnan(*value)) throw DomainError(std::string(what) + ": '" + std::string(text) + "' is not a number");
  return *value;
}

// ---------------------------------------------------------------------------
// Field and set presets

struct FieldSpec {
  std::string kind;
  std::vector<double> args;
};

FieldSpec parse_field_spec(std::string_view spec) {
  const auto parts = split(spec, ':');
  FieldSpec out{std::string(parts[0]), {}};
  static const std::map<std::string, std::size_t, std::less<>> arity = {
      {"random", 0}, {"constant", 1}, {"sigmoid", 2}, {"gauss-cdf", 2}, {"halfline", 1}, {"sin", 1}};
  const auto it = arity.find(out.kind);
  if (it == arity.end()) throw DomainError("unknown field preset '" + std::string(spec) + "'");
  if (parts.size() - 1 != it->second) {
    throw DomainError("field preset '" + out.kind + "' takes " + std::to_string(it->second) + " argument(s)");
  }
  for (std::size_t k = 1; k < parts.size(); ++k) {
    const double value = require_double(parts[k], "field preset '" + std::string(spec) + "'");
    if (!std::isfinite(value)) throw DomainError("field preset '" + std::string(spec) + "': arguments must be finite");
    out.args.push_back(value);
  }
  if (out.kind == "constant" && (out.args[0] < 0.0 || out.args[0] > 1.0)) {
    throw DomainError("field preset 'constant' needs a value in [0,1]");
  }
  return out;
}

void validate_set_spec(std::string_view spec) {
  const auto colon = spec.find(':');
  const std::string_view kind = spec.substr(0, colon);
  if (colon == std::string_view::npos) throw DomainError("set preset '" + std::string(spec) + "' needs an argument");
  const std::string_view arg = spec.substr(colon + 1);
  if (kind == "halfline") {
    require_double(arg, "set preset '" + std::string(spec) + "'");
  } else if (kind == "states") {
    for (std::string_view item : split(arg, ',')) {
      if (!to_unsigned(item)) throw DomainError("set preset '" + std::string(spec) + "': bad state '" + std::string(item) + "'");
    }
  } else {
    throw DomainError("unknown set preset '" + std::string(spec) + "'");
  }
}

// ---------------------------------------------------------------------------
// Assertion policy

enum class Policy { everywhere, chain, two_point_or_chain, never };

struct KindPolicy {
  const char* kind;
  Policy policy;
  double tolerance;
};

struct CheckPolicy {
  const char* name;
  bool needs_curvature;
  bool needs_cache;
  std::vector<KindPolicy> kinds;  // the first kind is the primary one
};

const std::vector<CheckPolicy>& policies() {
  static const std::vector<CheckPolicy> table = {
      {"curvature", false, false, {{"expect", Policy::everywhere, 1e-8}, {"states", Policy::never, 0.0}}},
      {"gradient-estimate", true, true, {{"main", Policy::everywhere, tolerance::gradient_estimate}}},
      {"variance-bound",
       true,
       true,
       {{"main", Policy::everywhere, tolerance::variance_bound}, {"upper", Policy::everywhere, tolerance::variance_bound}}},
      {"be-diagnostics",
       true,
       false,
       {{"self-improvement", Policy::chain, 5e-2},
        {"mass-identity", Policy::everywhere, tolerance::mass_identity},
        {"g3", Policy::chain, 5e-2}}},
      {"bobkov-local",
       true,
       true,
       {{"main", Policy::chain, tolerance::bobkov_local_chain}, {"start", Policy::everywhere, tolerance::bobkov_local_start}}},
      {"bobkov-global",
       true,
       false,
       {{"main", Policy::two_point_or_chain, tolerance::bobkov_global_chain},
        {"lip-corollary", Policy::two_point_or_chain, tolerance::bobkov_global_chain},
        {"bv-corollary", Policy::chain, tolerance::bobkov_global_chain}}},
      {"two-point-grid",
       false,
       false,
       {{"main", Policy::everywhere, tolerance::two_point_bobkov},
        {"equivalence", Policy::everywhere, tolerance::two_point_bobkov},
        {"lip-corollary", Policy::everywhere, tolerance::two_point_bobkov},
        {"bv-corollary", Policy::never, tolerance::two_point_bobkov}}},
      {"phi-trace",
       true,
       true,
       {{"derivative", Policy::chain, tolerance::phi_derivative_chain}, {"endpoint", Policy::everywhere, tolerance::phi_endpoint}}},
      {"zeta",
       true,
       true,
       {{"nonnegativity", Policy::chain, tolerance::zeta_chain},
        {"agreement", Policy::everywhere, tolerance::zeta_agreement},
        {"discriminant", Policy::everywhere, tolerance::discriminant},
        {"flat", Policy::never, 0.0}}},
      {"isoperimetry",
       true,
       false,
       {{"main", Policy::chain, tolerance::isoperimetric_relative}, {"continuum", Policy::never, 0.02}}},
      {"gauss-oracle", false, false, {{"main", Policy::everywhere, 1e-12}}},
  };
  return table;
}

const CheckPolicy& policy_for(std::string_view name) {
  for (const CheckPolicy& p : policies()) {
    if (name == p.name) return p;
  }
  throw DomainError("unknown check '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Default parameters

std::vector<std::string> sigmoid_family(std::initializer_list<double> slopes, std::initializer_list<double> centers) {
  std::vector<std::string> out;
  for (double s : slopes) {
    for (double c : centers) out.push_back("sigmoid:" + format_number(s) + ":" + format_number(c));
  }
  return out;
}

std::vector<std::string> default_fields(std::string_view check, bool chain) {
  if (!chain) return {"random"};
  if (check == "gradient-estimate" || check == "variance-bound") return {"random"};
  if (check == "bobkov-local" || check == "bobkov-global") return sigmoid_family({0.5, 1, 2, 4, 8}, {0, 0.75});
  return sigmoid_family({0.5, 1, 2}, {0, 0.3});
}

std::size_t default_samples(std::string_view check) {
  if (check == "gradient-estimate" || check == "variance-bound" || check == "be-diagnostics") return 100;
  if (check == "gauss-oracle") return 1000;
  return 10;
}

std::vector<double> default_times(std::string_view check, double horizon) {
  if (check == "gradient-estimate" || check == "variance-bound") return {0.1, 0.5, 1.0, 2.0};
  if (check == "bobkov-local") return {0.1, 0.5, 1.0};
  if (check == "zeta") return {0.1 * horizon, 0.5 * horizon, 0.9 * horizon};
  if (check == "phi-trace") return geometric_time_grid(0.05 * horizon, 0.95 * horizon, 8);
  return {};
}

std::vector<std::string> default_alphas(std::string_view check) {
  if (check == "bobkov-local") return {"0", "1/K"};
  return {"1/K"};
}

// ---------------------------------------------------------------------------
// Runtime context shared read-only by every task

struct Context {
  const MarkovTriple* triple = nullptr;
  const SpectralCache* cache = nullptr;
  Curvature kstar;
  bool chain = false;
  bool two_point = false;
  std::uint64_t seed = 0;
  double tolerance_scale = 1.0;
};

struct CaseTemplate {
  std::string kind;
  bool asserted = false;
  double tolerance = 0.0;
};

struct PlannedCheck {
  std::size_t index = 0;
  const CheckConfig* config = nullptr;
  const CheckPolicy* policy = nullptr;
  Curvature curvature;
  std::map<std::string, CaseTemplate, std::less<>> kinds;
  std::vector<std::string> fields;
  std::vector<std::string> phis;
  std::vector<std::string> alphas;
  std::vector<double> times;
  double horizon = 1.0;
  std::size_t samples = 0;
};

using Task = std::function<std::vector<CaseOutcome>()>;

CaseOutcome make_case(const PlannedCheck& plan, std::string_view kind, std::string label, std::vector<MarginRow> rows,
                      std::optional<double> tolerance_override = std::nullopt) {
  const CaseTemplate& tpl = plan.kinds.at(std::string(kind));
  CaseOutcome out;
  out.kind = tpl.kind;
  out.label = std::move(label);
  out.asserted = tpl.asserted;
  out.report.name = plan.config->name;
  out.report.rows = std::move(rows);
  out.report.finalize(tolerance_override.value_or(tpl.tolerance));
  return out;
}

CaseOutcome skipped_case(const PlannedCheck& plan, std::string_view kind, std::string label, std::string note) {
  CaseOutcome out = make_case(plan, kind, std::move(label), {});
  out.skipped = true;
  out.note = std::move(note);
  out.report.pass = true;
  return out;
}

std::string field_label(const std::string& spec, std::size_t sample) {
  return spec == "random" ? "random#" + std::to_string(sample) : spec;
}

// Expands "random" entries into `samples` members, each with its own stream.
struct FieldInstance {
  std::string label;
  std::string spec;
  std::uint64_t stream_seed;
};

std::vector<FieldInstance> expand_fields(const Context& ctx, const PlannedCheck& plan, const std::vector<std::string>& specs,
                                         std::uint64_t substream_base) {
  std::vector<FieldInstance> out;
  std::size_t ordinal = 0;
  for (const std::string& spec : specs) {
    const std::size_t copies = spec == "random" ? plan.samples : 1;
    for (std::size_t k = 0; k < copies; ++k) {
      out.push_back({field_label(spec, k), spec, derive_seed(ctx.seed, plan.index + 1, substream_base + ordinal)});
      ++ordinal;
    }
  }
  return out;
}

ScalarField instantiate(const Context& ctx, const FieldInstance& field) {
  std::mt19937_64 rng(field.stream_seed);
  return make_field(*ctx.triple, field.spec, rng);
}

std::optional<double> resolve_alpha(const std::string& alpha, double k) {
  if (alpha == "1/K") {
    if (!(k > 0.0)) return std::nullopt;
    return 1.0 / k;
  }
  return require_double(alpha, "alpha");
}

// ---------------------------------------------------------------------------
// Per-check task builders

void plan_curvature(const Context& ctx, const PlannedCheck& plan, const CurvatureReport& report, std::vector<Task>& tasks) {
  tasks.emplace_back([&ctx, &plan, &report] {
    std::vector<CaseOutcome> cases;
    const double global = report.global.as_double();
    if (plan.config->expect) {
      const double expect = *plan.config->expect;
      const double margin = report.global.is_negative_infinity() ? kInf : std::abs(global - expect);
      cases.push_back(make_case(plan, "expect", "K*", {MarginRow{std::nullopt, std::nullopt, margin, global, expect}}));
    }
    std::vector<MarginRow> rows;
    for (const LocalCurvature& local : report.states) {
      const double kx = local.curvature.as_double();
      double margin = global - kx;
      if (std::isnan(margin)) margin = 0.0;
      rows.push_back(MarginRow{local.state, std::nullopt, margin, kx, global});
    }
    cases.push_back(make_case(plan, "states", "K(x)", std::move(rows)));
    (void)ctx;
    return cases;
  });
}

void plan_gradient(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  const double k = plan.curvature.value();
  for (const FieldInstance& field : expand_fields(ctx, plan, plan.fields, 0)) {
    tasks.emplace_back([&ctx, &plan, field, k] {
      const MarkovTriple& triple = *ctx.triple;
      const ScalarField f = instantiate(ctx, field);
      const ScalarField grad = gamma(triple, f);
      std::vector<MarginRow> rows;
      for (double t : plan.times) {
        const ScalarField lhs = gamma(triple, ctx.cache->heat(f, t));
        const ScalarField rhs = std::exp(-2.0 * k * t) * ctx.cache->heat(grad, t);
        for (Eigen::Index x = 0; x < lhs.size(); ++x) {
          rows.push_back(MarginRow{static_cast<std::size_t>(x), t, lhs[x] - rhs[x], lhs[x], rhs[x]});
        }
      }
      return std::vector<CaseOutcome>{make_case(plan, "main", "f=" + field.label, std::move(rows))};
    });
  }
}

void plan_variance(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  const double k = plan.curvature.value();
  for (const FieldInstance& field : expand_fields(ctx, plan, plan.fields, 0)) {
    tasks.emplace_back([&ctx, &plan, field, k] {
      const MarkovTriple& triple = *ctx.triple;
      const ScalarField f = instantiate(ctx, field);
      const double sup = f.cwiseAbs().maxCoeff();
      std::vector<MarginRow> lower_rows;
      std::vector<MarginRow> upper_rows;
      for (double t : plan.times) {
        if (!(t > 0.0)) continue;
        const ScalarField flow = ctx.cache->heat(f, t);
        const ScalarField variance = ctx.cache->heat(f.cwiseProduct(f), t) - flow.cwiseProduct(flow);
        const ScalarField lhs = 2.0 * regularization_time(k, t) * gamma(triple, flow);
        for (Eigen::Index x = 0; x < lhs.size(); ++x) {
          const auto state = static_cast<std::size_t>(x);
          lower_rows.push_back(MarginRow{state, t, lhs[x] - variance[x], lhs[x], variance[x]});
          upper_rows.push_back(MarginRow{state, t, variance[x] - sup * sup, variance[x], sup * sup});
        }
      }
      return std::vector<CaseOutcome>{make_case(plan, "main", "f=" + field.label, std::move(lower_rows)),
                                      make_case(plan, "upper", "f=" + field.label, std::move(upper_rows))};
    });
  }
}

void plan_be(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  const double k = plan.curvature.value();
  for (const FieldInstance& field : expand_fields(ctx, plan, plan.fields, 0)) {
    tasks.emplace_back([&ctx, &plan, field, k] {
      const MarkovTriple& triple = *ctx.triple;
      const ScalarField f = instantiate(ctx, field);
      const ScalarField grad = gamma(triple, f);
      const double scale = std::max(grad.cwiseAbs().maxCoeff() * grad.cwiseAbs().maxCoeff(), 1e-300);
      const BakryEmeryDiagnostics diag = be_diagnostics(triple, f, k);
      const std::string label = "f=" + field.label;

      const ScalarField lf = laplacian(triple, f);
      const double pointwise_side = integral(triple, gamma2(triple, f) - k * grad);
      const double laplacian_side = integral(triple, lf.cwiseProduct(lf) - k * grad);

      const ScalarField lhs = gamma(triple, grad);
      const ScalarField rhs = 4.0 * gamma2_k(triple, f, k).cwiseProduct(grad);
      std::vector<MarginRow> rows;
      for (Eigen::Index x = 0; x < lhs.size(); ++x) {
        rows.push_back(MarginRow{static_cast<std::size_t>(x), std::nullopt, (lhs[x] - rhs[x]) / scale, lhs[x] / scale,
                                 rhs[x] / scale});
      }
      const double g3_lhs = cheeger_energy(triple, grad);
      const double g3_rhs = g3_lhs - diag.g3_margin;
      return std::vector<CaseOutcome>{
          make_case(plan, "self-improvement", label, std::move(rows)),
          make_case(plan, "mass-identity", label,
                    {MarginRow{std::nullopt, std::nullopt, diag.mass_identity_residual, pointwise_side, laplacian_side}}),
          make_case(plan, "g3", label,
                    {MarginRow{std::nullopt, std::nullopt, diag.g3_margin / scale, g3_lhs / scale, g3_rhs / scale}})};
    });
  }
}

void plan_bobkov_local(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  const Curvature curvature = plan.curvature;
  const double k = curvature.value();
  for (const FieldInstance& field : expand_fields(ctx, plan, plan.fields, 0)) {
    for (const std::string& alpha_text : plan.alphas) {
      tasks.emplace_back([&ctx, &plan, field, alpha_text, curvature, k] {
        const std::string label = "f=" + field.label + " alpha=" + alpha_text;
        const std::optional<double> alpha = resolve_alpha(alpha_text, k);
        if (!alpha) {
          return std::vector<CaseOutcome>{skipped_case(plan, "main", label, "alpha=1/K needs K > 0"),
                                          skipped_case(plan, "start", label, "alpha=1/K needs K > 0")};
        }
        const ScalarField f = instantiate(ctx, field);
        const double zero = 0.0;
        VerifierReport start = bobkov_local(*ctx.cache, f, *alpha, curvature, std::span<const double>(&zero, 1),
                                            plan.config->eps);
        VerifierReport main = bobkov_local(*ctx.cache, f, *alpha, curvature, plan.times, plan.config->eps);
        return std::vector<CaseOutcome>{make_case(plan, "main", label, std::move(main.rows)),
                                        make_case(plan, "start", label, std::move(start.rows))};
      });
    }
  }
}

void plan_bobkov_global(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  const double k = plan.curvature.value();
  for (const FieldInstance& field : expand_fields(ctx, plan, plan.fields, 0)) {
    tasks.emplace_back([&ctx, &plan, field, k] {
      const std::string label = "f=" + field.label;
      if (!(k > 0.0)) {
        return std::vector<CaseOutcome>{skipped_case(plan, "main", label, "needs K > 0"),
                                        skipped_case(plan, "lip-corollary", label, "needs K > 0"),
                                        skipped_case(plan, "bv-corollary", label, "needs K > 0")};
      }
      const MarkovTriple& triple = *ctx.triple;
      const ScalarField f = instantiate(ctx, field);
      VerifierReport main = bobkov_global(triple, f, k);
      const double lhs = main.rows.front().lhs;
      const double lip = lip_corollary_margin(triple, f, k);
      const double bv = bv_corollary_margin(triple, f, k);
      return std::vector<CaseOutcome>{
          make_case(plan, "main", label, std::move(main.rows)),
          make_case(plan, "lip-corollary", label, {MarginRow{std::nullopt, std::nullopt, lip, lhs, lhs - lip}}),
          make_case(plan, "bv-corollary", label, {MarginRow{std::nullopt, std::nullopt, bv, lhs, lhs - bv}})};
    });
  }
}

void plan_two_point_grid(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  tasks.emplace_back([&ctx, &plan] {
    const MarkovTriple& triple = *ctx.triple;
    const double k = 2.0 * triple.rate(0, 1);
    const double root_k = std::sqrt(k);
    const std::size_t n = plan.config->grid;
    std::vector<MarginRow> main_rows;
    std::vector<MarginRow> equivalence_rows;
    std::vector<MarginRow> lip_rows;
    std::vector<MarginRow> bv_rows;
    ScalarField f(2);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double a = static_cast<double>(i) / static_cast<double>(n - 1);
        const double b = static_cast<double>(j) / static_cast<double>(n - 1);
        const std::size_t cell = i * n + j;
        const double margin = two_point_bobkov_margin(a, b);
        const double lhs = isoperimetric_profile(0.5 * (a + b));
        main_rows.push_back(MarginRow{cell, std::nullopt, margin, lhs, lhs - margin});
        f << a, b;
        const double global = bobkov_global(triple, f, k).worst_margin;
        equivalence_rows.push_back(
            MarginRow{cell, std::nullopt, std::abs(global - root_k * margin), global, root_k * margin});
        const double lip = lip_corollary_margin(triple, f, k);
        lip_rows.push_back(MarginRow{cell, std::nullopt, lip, root_k * lhs, root_k * lhs - lip});
        const double bv = bv_corollary_margin(triple, f, k);
        bv_rows.push_back(MarginRow{cell, std::nullopt, bv, root_k * lhs, root_k * lhs - bv});
      }
    }
    const std::string label = "grid=" + std::to_string(n);
    return std::vector<CaseOutcome>{make_case(plan, "main", label, std::move(main_rows)),
                                    make_case(plan, "equivalence", label, std::move(equivalence_rows)),
                                    make_case(plan, "lip-corollary", label, std::move(lip_rows)),
                                    make_case(plan, "bv-corollary", label, std::move(bv_rows))};
  });
}

void plan_phi(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  const Curvature curvature = plan.curvature;
  const double k = curvature.value();
  const auto phis = expand_fields(ctx, plan, plan.phis, 100000);
  for (const FieldInstance& field : expand_fields(ctx, plan, plan.fields, 0)) {
    for (const FieldInstance& phi : phis) {
      for (const std::string& alpha_text : plan.alphas) {
        tasks.emplace_back([&ctx, &plan, field, phi, alpha_text, curvature, k] {
          const std::string label = "f=" + field.label + " phi=" + phi.label + " alpha=" + alpha_text;
          const std::optional<double> alpha = resolve_alpha(alpha_text, k);
          if (!alpha) {
            return std::vector<CaseOutcome>{skipped_case(plan, "derivative", label, "alpha=1/K needs K > 0"),
                                            skipped_case(plan, "endpoint", label, "alpha=1/K needs K > 0")};
          }
          const ScalarField f = truncate(instantiate(ctx, field), plan.config->eps);
          const ScalarField weight = instantiate(ctx, phi);
          const PhiTrace trace = phi_trace(*ctx.cache, f, weight, plan.horizon, *alpha, curvature, plan.times);
          std::vector<MarginRow> rows;
          for (std::size_t i = 0; i < trace.times.size(); ++i) {
            rows.push_back(MarginRow{std::nullopt, trace.times[i], trace.lower_bounds[i] - trace.derivatives[i],
                                     trace.lower_bounds[i], trace.derivatives[i]});
          }
          return std::vector<CaseOutcome>{
              make_case(plan, "derivative", label, std::move(rows)),
              make_case(plan, "endpoint", label,
                        {MarginRow{std::nullopt, plan.horizon, trace.endpoint_residual, trace.end - trace.start,
                                   trace.endpoint_rhs}})};
        });
      }
    }
  }
}

void plan_zeta(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  const Curvature curvature = plan.curvature;
  const double k = curvature.value();
  for (const FieldInstance& field : expand_fields(ctx, plan, plan.fields, 0)) {
    for (const std::string& alpha_text : plan.alphas) {
      tasks.emplace_back([&ctx, &plan, field, alpha_text, curvature, k] {
        const std::string label = "f=" + field.label + " alpha=" + alpha_text;
        const std::optional<double> alpha = resolve_alpha(alpha_text, k);
        if (!alpha) {
          std::vector<CaseOutcome> cases;
          for (const char* kind : {"nonnegativity", "agreement", "discriminant", "flat"}) {
            cases.push_back(skipped_case(plan, kind, label, "alpha=1/K needs K > 0"));
          }
          return cases;
        }
        const MarkovTriple& triple = *ctx.triple;
        const ScalarField f = truncate(instantiate(ctx, field), plan.config->eps);
        std::vector<MarginRow> nonneg;
        std::vector<MarginRow> agreement;
        std::vector<MarginRow> discriminant;
        std::vector<MarginRow> flat;
        for (double t : plan.times) {
          const ZetaField zeta = zeta_field(*ctx.cache, f, plan.horizon, t, *alpha, curvature);
          const ScalarField g = ctx.cache->heat(f, plan.horizon - t);
          const ScalarField grad = gamma(triple, g);
          const ScalarField grad_grad = gamma(triple, grad);
          const ScalarField cross = gamma(triple, g, grad);
          for (Eigen::Index x = 0; x < g.size(); ++x) {
            const auto state = static_cast<std::size_t>(x);
            nonneg.push_back(MarginRow{state, t, -zeta.field[x], 0.0, zeta.field[x]});
            const double scale = std::max({1.0, std::abs(zeta.six_term[x]), std::abs(zeta.closed_form[x])});
            agreement.push_back(MarginRow{state, t, std::abs(zeta.six_term[x] - zeta.closed_form[x]) / scale,
                                          zeta.six_term[x], zeta.closed_form[x]});
            if (grad[x] > 0.0) {
              const double lhs = cross[x] * cross[x];
              const double rhs = grad[x] * grad_grad[x];
              discriminant.push_back(MarginRow{state, t, (lhs - rhs) / std::max(1.0, rhs), lhs, rhs});
            }
          }
          for (std::size_t state : zeta.unresolved_states) {
            const auto x = static_cast<Eigen::Index>(state);
            flat.push_back(MarginRow{state, t, grad_grad[x], grad_grad[x], 0.0});
          }
        }
        return std::vector<CaseOutcome>{make_case(plan, "nonnegativity", label, std::move(nonneg)),
                                        make_case(plan, "agreement", label, std::move(agreement)),
                                        make_case(plan, "discriminant", label, std::move(discriminant)),
                                        make_case(plan, "flat", label, std::move(flat))};
      });
    }
  }
}

void plan_isoperimetry(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  const double k = plan.curvature.value();
  for (const std::string& spec : plan.config->sets.empty()
                                     ? (ctx.chain ? std::vector<std::string>{"halfline:-1", "halfline:0", "halfline:1"}
                                                  : std::vector<std::string>{"states:0"})
                                     : plan.config->sets) {
    tasks.emplace_back([&ctx, &plan, spec, k] {
      const std::string label = "E=" + spec;
      if (!(k > 0.0)) {
        return std::vector<CaseOutcome>{skipped_case(plan, "main", label, "needs K > 0"),
                                        skipped_case(plan, "continuum", label, "needs K > 0")};
      }
      const MarkovTriple& triple = *ctx.triple;
      const StateSet set = make_set(triple, spec);
      const CaseTemplate& main_tpl = plan.kinds.at("main");
      VerifierReport report = isoperimetric_margin(triple, set, k, main_tpl.tolerance);
      CaseOutcome main = make_case(plan, "main", label, std::move(report.rows), report.tolerance);

      std::vector<MarginRow> continuum;
      if (ctx.chain && spec.starts_with("halfline:") && !set.empty() && set.size() < triple.size()) {
        const ScalarField x = state_coordinates(triple);
        const auto last = static_cast<Eigen::Index>(set.back());
        const double boundary = 0.5 * (x[last] + x[last + 1]);
        const double p = perimeter(triple, set);
        const double density = normal_pdf(boundary);
        continuum.push_back(MarginRow{std::nullopt, std::nullopt, std::abs(p / density - 1.0), p, density});
      }
      return std::vector<CaseOutcome>{std::move(main), make_case(plan, "continuum", label, std::move(continuum))};
    });
  }
}

IntervalUnion random_union(std::mt19937_64& rng) {
  std::vector<IntervalUnion::Interval> intervals;
  const auto count = 1 + static_cast<std::size_t>(3.0 * unit_uniform(rng));
  for (std::size_t k = 0; k < count; ++k) {
    double lo = -4.0 + 8.0 * unit_uniform(rng);
    double hi = -4.0 + 8.0 * unit_uniform(rng);
    if (lo > hi) std::swap(lo, hi);
    if (unit_uniform(rng) < 0.1) lo = -kInf;
    if (unit_uniform(rng) < 0.1) hi = kInf;
    intervals.push_back({lo, hi});
  }
  return IntervalUnion(std::move(intervals));
}

void plan_gauss(const Context& ctx, const PlannedCheck& plan, std::vector<Task>& tasks) {
  auto oracle_row = [](const IntervalUnion& set, std::optional<std::size_t> index) {
    const GaussianSet g = gaussian_interval_oracle(set);
    const double profile_value = isoperimetric_profile(std::clamp(g.mass, 0.0, 1.0));
    return MarginRow{index, std::nullopt, profile_value - g.perimeter, profile_value, g.perimeter};
  };
  for (const std::string& text : plan.config->intervals.empty() ? std::vector<std::string>{"[-inf,0]", "[-1,1]"}
                                                                : plan.config->intervals) {
    tasks.emplace_back([&plan, text, oracle_row] {
      return std::vector<CaseOutcome>{make_case(plan, "main", "E=" + text, {oracle_row(IntervalUnion::parse(text), std::nullopt)})};
    });
  }
  if (plan.samples > 0) {
    tasks.emplace_back([&ctx, &plan, oracle_row] {
      std::mt19937_64 rng(derive_seed(ctx.seed, plan.index + 1, 0));
      std::vector<MarginRow> rows;
      for (std::size_t s = 0; s < plan.samples; ++s) rows.push_back(oracle_row(random_union(rng), s));
      return std::vector<CaseOutcome>{make_case(plan, "main", "random unions", std::move(rows))};
    });
  }
}

// ---------------------------------------------------------------------------
// Worker pool with ordered results

std::vector<std::vector<CaseOutcome>> run_tasks(const std::vector<Task>& tasks) {
  std::vector<std::vector<CaseOutcome>> results(tasks.size());
  std::vector<std::exception_ptr> errors(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      try {
        results[i] = tasks[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::min(worker_count(), std::max<std::size_t>(tasks.size(), 1));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  for (const std::exception_ptr& error : errors) {
    if (error) std::rethrow_exception(error);
  }
  return results;
}

std::string assert_mode_name(AssertMode mode) {
  switch (mode) {
    case AssertMode::automatic: return "auto";
    case AssertMode::always: return "true";
    case AssertMode::never: return "false";
  }
  return "auto";
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const std::string& item : items) {
    if (!out.empty()) out += ' ';
    out += item;
  }
  return out;
}

std::string join_numbers(const std::vector<double>& items) {
  std::vector<std::string> text;
  for (double v : items) text.push_back(format_number(v));
  return join(text);
}

bool policy_applies(Policy policy, const Context& ctx) {
  switch (policy) {
    case Policy::everywhere: return true;
    case Policy::chain: return ctx.chain;
    case Policy::two_point_or_chain: return ctx.chain || ctx.two_point;
    case Policy::never: return false;
  }
  return false;
}

double default_tolerance(const std::string& check, const KindPolicy& kind, const Context& ctx) {
  if (check == "bobkov-global" && ctx.two_point && (std::string_view(kind.kind) == "main" || std::string_view(kind.kind) == "lip-corollary")) {
    return tolerance::two_point_bobkov;
  }
  return kind.tolerance;
}

}  // namespace

// ---------------------------------------------------------------------------
// Public helpers

std::string_view library_version() { return GAMMALAB_VERSION; }

OutputFormat parse_output_format(std::string_view name) {
  if (name == "csv") return OutputFormat::csv;
  if (name == "json-lines") return OutputFormat::json_lines;
  throw DomainError("unknown output format '" + std::string(name) + "' (expected csv or json-lines)");
}

std::string_view to_string(OutputFormat format) { return format == OutputFormat::csv ? "csv" : "json-lines"; }

std::string_view to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::pass: return "pass";
    case CheckStatus::fail: return "fail";
    case CheckStatus::reported: return "reported";
    case CheckStatus::skipped: return "skipped";
  }
  return "skipped";
}

const std::vector<std::string>& check_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const CheckPolicy& p : policies()) out.emplace_back(p.name);
    return out;
  }();
  return names;
}

bool is_check_name(std::string_view name) {
  return std::find(check_names().begin(), check_names().end(), name) != check_names().end();
}

std::string format_number(double value) {
  if (std::isnan(value)) throw NumericError("non-finite value in a report table");
  if (value == -kInf) return "NEG_INF";
  if (value == kInf) return "POS_INF";
  if (value == 0.0) return "0";
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.12g", value);
  return buffer;
}

std::size_t worker_count() {
  if (const char* env = std::getenv(kWorkersEnv)) {
    if (const auto value = to_unsigned(env); value && *value > 0) return static_cast<std::size_t>(*value);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ stream) ^ (substream * 0xd1b54a32d192ed03ULL));
}

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

ScalarField make_field(const MarkovTriple& triple, std::string_view spec, std::mt19937_64& rng) {
  const FieldSpec parsed = parse_field_spec(spec);
  const auto n = static_cast<Eigen::Index>(triple.size());
  if (parsed.kind == "random") {
    ScalarField f(n);
    for (Eigen::Index x = 0; x < n; ++x) f[x] = unit_uniform(rng);
    return f;
  }
  if (parsed.kind == "constant") return ScalarField::Constant(n, parsed.args[0]);
  const ScalarField x = state_coordinates(triple);
  const auto& a = parsed.args;
  if (parsed.kind == "sigmoid") return x.unaryExpr([&](double v) { return 1.0 / (1.0 + std::exp(-a[0] * (v - a[1]))); });
  if (parsed.kind == "gauss-cdf") return x.unaryExpr([&](double v) { return normal_cdf(a[0] * v + a[1]); });
  if (parsed.kind == "halfline") return x.unaryExpr([&](double v) { return v <= a[0] ? 1.0 : 0.0; });
  return x.unaryExpr([&](double v) { return 0.5 * (1.0 + std::sin(a[0] * v)); });
}

StateSet make_set(const MarkovTriple& triple, std::string_view spec) {
  validate_set_spec(spec);
  const auto colon = spec.find(':');
  const std::string_view arg = spec.substr(colon + 1);
  StateSet set;
  if (spec.starts_with("halfline:")) {
    const double r = require_double(arg, "halfline");
    const ScalarField x = state_coordinates(triple);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x[i] <= r) set.push_back(static_cast<std::size_t>(i));
    }
    return set;
  }
  for (std::string_view item : split(arg, ',')) {
    const std::size_t state = *to_unsigned(item);
    if (state >= triple.size()) throw ConfigError("set '" + std::string(spec) + "' names state " + std::to_string(state) + " outside the space");
    set.push_back(state);
  }
  std::sort(set.begin(), set.end());
  set.erase(std::unique(set.begin(), set.end()), set.end());
  return set;
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

struct Token {
  std::string_view text;
  std::size_t column;
};

std::vector<Token> tokenize(std::string_view line) {
  std::vector<Token> tokens;
  std::size_t pos = 0;
  while (pos < line.size()) {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t' || line[pos] == '\r')) ++pos;
    if (pos >= line.size()) break;
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '\r') ++pos;
    tokens.push_back({line.substr(start, pos - start), start + 1});
  }
  return tokens;
}

class ConfigParser {
 public:
  ConfigParser(std::string_view source, std::filesystem::path base_dir) : source_(source), base_dir_(std::move(base_dir)) {}

  [[noreturn]] void fail(std::size_t line, std::size_t column, const std::string& detail) const {
    throw ParseError(std::string(source_), line, column, detail);
  }

  double number(const Token& token, std::size_t line) const {
    const auto value = to_double(token.text);
    if (!value || std::isnan(*value)) fail(line, token.column, "expected a number, got '" + std::string(token.text) + "'");
    return *value;
  }

  std::uint64_t count(const Token& token, std::size_t line) const {
    const auto value = to_unsigned(token.text);
    if (!value) fail(line, token.column, "expected a nonnegative integer, got '" + std::string(token.text) + "'");
    return *value;
  }

  ExperimentConfig parse(std::string_view text) {
    ExperimentConfig config;
    config.source = std::string(source_);
    enum class Section { none, space, check, output } section = Section::none;
    bool seen_format = false;
    SpaceSpec space;
    bool space_seen = false;
    bool model_seen = false;
    std::size_t space_line = 0;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
      const std::size_t end = std::min(text.find('\n', start), text.size());
      std::string_view line = text.substr(start, end - start);
      start = end + 1;
      ++line_no;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      const auto tokens = tokenize(line);
      if (tokens.empty()) {
        if (end == text.size()) break;
        continue;
      }
      const Token& head = tokens.front();
      if (!seen_format) {
        if (head.text != "format" || tokens.size() != 2) fail(line_no, head.column, "expected 'format 1' before any content");
        if (tokens[1].text != "1") fail(line_no, tokens[1].column, "unsupported config format '" + std::string(tokens[1].text) + "'");
        seen_format = true;
        continue;
      }
      if (head.text.starts_with('[')) {
        std::string header;
        for (const Token& t : tokens) header += (header.empty() ? "" : " ") + std::string(t.text);
        if (header == "[space]") {
          if (space_seen) fail(line_no, head.column, "duplicate [space] section");
          section = Section::space;
          space_seen = true;
          space_line = line_no;
        } else if (header == "[output]") {
          section = Section::output;
        } else if (header.starts_with("[check ") && header.ends_with(']')) {
          const std::string name = header.substr(7, header.size() - 8);
          if (!is_check_name(name)) fail(line_no, tokens[1].column, "unknown check '" + name + "'");
          CheckConfig check;
          check.name = name;
          check.line = line_no;
          config.checks.push_back(std::move(check));
          section = Section::check;
        } else {
          fail(line_no, head.column, "unknown section " + header);
        }
        continue;
      }
      switch (section) {
        case Section::none: fail(line_no, head.column, "key '" + std::string(head.text) + "' outside of a section");
        case Section::space: parse_space_key(space, model_seen, tokens, line_no); break;
        case Section::output: parse_output_key(config, tokens, line_no); break;
        case Section::check: parse_check_key(config.checks.back(), tokens, line, line_no); break;
      }
      if (end == text.size()) break;
    }
    if (!seen_format) fail(line_no == 0 ? 1 : line_no, 1, "missing 'format 1' header");
    if (space_seen) {
      if (!model_seen) fail(space_line, 1, "[space] needs a model");
      try {
        space.validate();
      } catch (const DomainError& e) {
        fail(space_line, 1, e.what());
      }
      config.space = space;
    }
    return config;
  }

 private:
  void expect_arity(const std::vector<Token>& tokens, std::size_t count, std::size_t line) const {
    if (tokens.size() != count + 1) {
      fail(line, tokens.front().column,
           "'" + std::string(tokens.front().text) + "' takes " + std::to_string(count) + " value(s)");
    }
  }

  void parse_space_key(SpaceSpec& space, bool& model_seen, const std::vector<Token>& tokens, std::size_t line) const {
    const std::string_view key = tokens.front().text;
    expect_arity(tokens, 1, line);
    const Token& value = tokens[1];
    if (key == "model") {
      try {
        space.model = parse_space_model(value.text);
      } catch (const DomainError& e) {
        fail(line, value.column, e.what());
      }
      model_seen = true;
    } else if (key == "rho" || key == "rate") {
      space.rate = number(value, line);
    } else if (key == "n") {
      space.size = count(value, line);
    } else if (key == "R") {
      space.half_width = number(value, line);
    } else if (key == "d") {
      space.dimension = count(value, line);
    } else if (key == "path") {
      const std::filesystem::path path(std::string(value.text));
      space.path = path.is_absolute() || base_dir_.empty() ? path : base_dir_ / path;
    } else if (key == "normalize") {
      if (value.text != "true" && value.text != "false") fail(line, value.column, "normalize must be true or false");
      space.normalize = value.text == "true";
    } else {
      fail(line, tokens.front().column, "unknown key '" + std::string(key) + "' in [space]");
    }
  }

  void parse_output_key(ExperimentConfig& config, const std::vector<Token>& tokens, std::size_t line) const {
    const std::string_view key = tokens.front().text;
    expect_arity(tokens, 1, line);
    const Token& value = tokens[1];
    if (key == "seed") {
      config.seed = count(value, line);
    } else if (key == "format") {
      try {
        config.format = parse_output_format(value.text);
      } catch (const DomainError& e) {
        fail(line, value.column, e.what());
      }
    } else if (key == "dir") {
      const std::filesystem::path path(std::string(value.text));
      config.out_dir = path.is_absolute() || base_dir_.empty() ? path : base_dir_ / path;
    } else if (key == "tolerance-scale") {
      config.tolerance_scale = number(value, line);
      if (!(config.tolerance_scale > 0.0)) fail(line, value.column, "tolerance-scale must be positive");
    } else {
      fail(line, tokens.front().column, "unknown key '" + std::string(key) + "' in [output]");
    }
  }

  void parse_check_key(CheckConfig& check, const std::vector<Token>& tokens, std::string_view raw, std::size_t line) const {
    const std::string_view key = tokens.front().text;
    const std::string context = " in [check " + check.name + "]";
    auto values = [&] {
      if (tokens.size() < 2) fail(line, tokens.front().column, "'" + std::string(key) + "' needs at least one value");
      return std::span<const Token>(tokens).subspan(1);
    };
    auto single_number = [&] {
      expect_arity(tokens, 1, line);
      return number(tokens[1], line);
    };
    if (key == "fields" || key == "phi") {
      auto& target = key == "fields" ? check.fields : check.phis;
      for (const Token& t : values()) {
        try {
          parse_field_spec(t.text);
        } catch (const DomainError& e) {
          fail(line, t.column, e.what());
        }
        target.emplace_back(t.text);
      }
    } else if (key == "alpha") {
      for (const Token& t : values()) {
        if (t.text != "1/K") {
          const double a = number(t, line);
          if (!(a >= 0.0) || !std::isfinite(a)) fail(line, t.column, "alpha must be a finite nonnegative number or 1/K");
        }
        check.alphas.emplace_back(t.text);
      }
    } else if (key == "t") {
      for (const Token& t : values()) {
        const double value = number(t, line);
        if (!(value >= 0.0) || !std::isfinite(value)) fail(line, t.column, "times must be finite and nonnegative");
        check.times.push_back(value);
      }
    } else if (key == "T") {
      check.horizon = single_number();
      if (!(*check.horizon > 0.0)) fail(line, tokens[1].column, "T must be positive");
    } else if (key == "eps") {
      check.eps = single_number();
      if (!(check.eps > 0.0 && check.eps < 0.5)) fail(line, tokens[1].column, "eps must lie in (0, 1/2)");
    } else if (key == "K") {
      check.curvature = single_number();
      if (!std::isfinite(*check.curvature)) fail(line, tokens[1].column, "K override must be finite");
    } else if (key == "expect") {
      check.expect = single_number();
    } else if (key == "samples") {
      expect_arity(tokens, 1, line);
      check.samples = count(tokens[1], line);
    } else if (key == "grid") {
      expect_arity(tokens, 1, line);
      check.grid = count(tokens[1], line);
      if (check.grid < 2) fail(line, tokens[1].column, "grid needs at least 2 points");
    } else if (key == "sets") {
      for (const Token& t : values()) {
        try {
          validate_set_spec(t.text);
        } catch (const DomainError& e) {
          fail(line, t.column, e.what());
        }
        check.sets.emplace_back(t.text);
      }
    } else if (key == "interval") {
      values();
      const std::size_t offset = tokens[1].column - 1;
      std::string_view rest = raw.substr(offset);
      while (!rest.empty() && (rest.back() == ' ' || rest.back() == '\t' || rest.back() == '\r')) rest.remove_suffix(1);
      try {
        IntervalUnion::parse(rest);
      } catch (const DomainError& e) {
        fail(line, tokens[1].column, e.what());
      }
      check.intervals.emplace_back(rest);
    } else if (key == "assert") {
      expect_arity(tokens, 1, line);
      const std::string_view v = tokens[1].text;
      if (v == "auto") {
        check.assert_mode = AssertMode::automatic;
      } else if (v == "true") {
        check.assert_mode = AssertMode::always;
      } else if (v == "false") {
        check.assert_mode = AssertMode::never;
      } else {
        fail(line, tokens[1].column, "assert must be auto, true or false");
      }
    } else if (key == "tolerance") {
      if (tokens.size() != 2 && tokens.size() != 3) fail(line, tokens.front().column, "usage: tolerance [kind] value");
      std::string kind;
      if (tokens.size() == 3) {
        kind = std::string(tokens[1].text);
        const CheckPolicy& policy = policy_for(check.name);
        const bool known = std::any_of(policy.kinds.begin(), policy.kinds.end(),
                                       [&](const KindPolicy& k) { return kind == k.kind; });
        if (!known) fail(line, tokens[1].column, "check " + check.name + " has no case kind '" + kind + "'");
      }
      const double value = number(tokens.back(), line);
      if (!(value >= 0.0)) fail(line, tokens.back().column, "tolerance must be nonnegative");
      check.tolerances.emplace_back(kind, value);
    } else {
      fail(line, tokens.front().column, "unknown key '" + std::string(key) + "'" + context);
    }
  }

  std::string_view source_;
  std::filesystem::path base_dir_;
};

}  // namespace

ExperimentConfig parse_experiment(std::string_view text, std::string_view source, const std::filesystem::path& base_dir) {
  return ConfigParser(source, base_dir).parse(text);
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, 0, "cannot open config file");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_experiment(buffer.str(), path.string(), path.parent_path());
}

// ---------------------------------------------------------------------------
// Outcomes

CheckStatus CheckOutcome::status() const {
  bool any_asserted = false;
  bool all_skipped = !cases.empty();
  for (const CaseOutcome& c : cases) {
    if (!c.skipped) all_skipped = false;
    if (c.asserted && !c.skipped) {
      any_asserted = true;
      if (!c.report.pass) return CheckStatus::fail;
    }
  }
  if (all_skipped) return CheckStatus::skipped;
  return any_asserted ? CheckStatus::pass : CheckStatus::reported;
}

bool ExperimentResult::passed() const {
  return std::none_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.status() == CheckStatus::fail; });
}

ExperimentResult run_experiment(const ExperimentConfig& config, const MarkovTriple* triple_override) {
  if (!triple_override && !config.space) {
    const bool needs_space = std::any_of(config.checks.begin(), config.checks.end(),
                                         [](const CheckConfig& c) { return c.name != "gauss-oracle"; });
    if (needs_space) throw ConfigError(config.source + ": no [space] section");
  }
  std::optional<MarkovTriple> built;
  if (!triple_override && config.space) {
    try {
      built.emplace(build_space(*config.space));
    } catch (const DomainError& e) {
      throw ConfigError(config.source + ": space: " + e.what());
    }
  }
  const MarkovTriple* triple = triple_override ? triple_override : (built ? &*built : nullptr);

  ExperimentResult result;
  result.seed = config.seed;
  Context ctx;
  ctx.seed = config.seed;
  ctx.tolerance_scale = config.tolerance_scale;
  ctx.triple = triple;
  if (triple) {
    result.states = triple->size();
    for (const auto& [key, value] : triple->metadata()) result.space.emplace_back(key, value);
    ctx.chain = is_diffusion_chain(*triple);
    const auto model = triple->metadata().find("model");
    ctx.two_point = model != triple->metadata().end() && model->second == "two_point" && triple->size() == 2;
  }

  bool needs_curvature = false;
  bool needs_cache = false;
  for (const CheckConfig& check : config.checks) {
    const CheckPolicy& policy = policy_for(check.name);
    if (check.name == "two-point-grid" && !ctx.two_point) {
      throw ConfigError("check/space incompatibility: two-point-grid needs a two_point space");
    }
    needs_curvature |= check.name == "curvature" || (policy.needs_curvature && !check.curvature);
    needs_cache |= policy.needs_cache;
    if (check.assert_mode == AssertMode::always) {
      for (const KindPolicy& kind : policy.kinds) {
        if ((kind.policy == Policy::chain || kind.policy == Policy::two_point_or_chain) && !policy_applies(kind.policy, ctx)) {
          throw ConfigError("check/space incompatibility: " + check.name + " (" + kind.kind +
                            ") can only be asserted on " +
                            (kind.policy == Policy::chain ? "ou_chain spaces" : "two_point or ou_chain spaces"));
        }
      }
    }
  }

  std::optional<CurvatureReport> curvature;
  if (needs_curvature && triple) {
    curvature.emplace(curvature_global(*triple));
    ctx.kstar = curvature->global;
    result.curvature = curvature->global.as_double();
  }
  std::optional<SpectralCache> cache;
  if (needs_cache && triple) {
    cache.emplace(*triple);
    ctx.cache = &*cache;
  }

  std::vector<PlannedCheck> plans(config.checks.size());
  std::vector<Task> tasks;
  std::vector<std::size_t> task_owner;
  std::map<std::string, std::size_t> name_counts;
  for (std::size_t i = 0; i < config.checks.size(); ++i) {
    const CheckConfig& check = config.checks[i];
    PlannedCheck& plan = plans[i];
    plan.index = i;
    plan.config = &check;
    plan.policy = &policy_for(check.name);
    plan.curvature = check.curvature ? Curvature(*check.curvature) : ctx.kstar;
    plan.horizon = check.horizon.value_or(1.0);
    plan.fields = check.fields.empty() ? default_fields(check.name, ctx.chain) : check.fields;
    plan.phis = check.phis.empty() ? std::vector<std::string>{"constant:1", "random"} : check.phis;
    plan.alphas = check.alphas.empty() ? default_alphas(check.name) : check.alphas;
    plan.times = check.times.empty() ? default_times(check.name, plan.horizon) : check.times;
    plan.samples = check.samples.value_or(check.name == "phi-trace" ? 2 : default_samples(check.name));
    for (std::size_t k = 0; k < plan.policy->kinds.size(); ++k) {
      const KindPolicy& kind = plan.policy->kinds[k];
      CaseTemplate tpl;
      tpl.kind = kind.kind;
      tpl.asserted = check.assert_mode != AssertMode::never &&
                     (kind.policy == Policy::everywhere ||
                      (kind.policy != Policy::never && policy_applies(kind.policy, ctx)));
      tpl.tolerance = default_tolerance(check.name, kind, ctx);
      for (const auto& [target, value] : check.tolerances) {
        if (target == kind.kind || (target.empty() && k == 0)) tpl.tolerance = value;
      }
      if (!tpl.asserted) tpl.tolerance *= config.tolerance_scale;
      plan.kinds.emplace(tpl.kind, tpl);
    }
    if (check.name == "phi-trace" || check.name == "zeta") {
      for (double t : plan.times) {
        if (!(t > 0.0 && t < plan.horizon)) {
          throw ConfigError("[check " + check.name + "] times must lie strictly between 0 and T");
        }
      }
    }

    const std::size_t count = ++name_counts[check.name];

    const std::size_t before = tasks.size();
    if (plan.policy->needs_curvature && plan.curvature.is_negative_infinity() && check.name != "curvature") {
      const std::string kind = plan.policy->kinds.front().kind;
      tasks.emplace_back([&plan, kind] {
        return std::vector<CaseOutcome>{skipped_case(plan, kind, "all", "curvature is NEG_INF")};
      });
    } else if (check.name == "curvature") {
      plan_curvature(ctx, plan, *curvature, tasks);
    } else if (check.name == "gradient-estimate") {
      plan_gradient(ctx, plan, tasks);
    } else if (check.name == "variance-bound") {
      plan_variance(ctx, plan, tasks);
    } else if (check.name == "be-diagnostics") {
      plan_be(ctx, plan, tasks);
    } else if (check.name == "bobkov-local") {
      plan_bobkov_local(ctx, plan, tasks);
    } else if (check.name == "bobkov-global") {
      plan_bobkov_global(ctx, plan, tasks);
    } else if (check.name == "two-point-grid") {
      plan_two_point_grid(ctx, plan, tasks);
    } else if (check.name == "phi-trace") {
      plan_phi(ctx, plan, tasks);
    } else if (check.name == "zeta") {
      plan_zeta(ctx, plan, tasks);
    } else if (check.name == "isoperimetry") {
      plan_isoperimetry(ctx, plan, tasks);
    } else if (check.name == "gauss-oracle") {
      plan_gauss(ctx, plan, tasks);
    }
    task_owner.resize(tasks.size(), i);
    (void)before;

    CheckOutcome outcome;
    outcome.name = check.name;
    outcome.table_name = count == 1 ? check.name : check.name + "-" + std::to_string(count);
    auto& params = outcome.parameters;
    params.emplace_back("assert", assert_mode_name(check.assert_mode));
    if (plan.policy->needs_curvature) {
      params.emplace_back("K", format_number(plan.curvature.as_double()));
      params.emplace_back("K_source", check.curvature ? "override" : "computed");
    }
    const std::string& n = check.name;
    const bool uses_fields = n != "curvature" && n != "two-point-grid" && n != "isoperimetry" && n != "gauss-oracle";
    if (uses_fields) {
      params.emplace_back("fields", join(plan.fields));
      params.emplace_back("samples", std::to_string(plan.samples));
    }
    if (n == "phi-trace") params.emplace_back("phi", join(plan.phis));
    if (n == "bobkov-local" || n == "phi-trace" || n == "zeta") {
      params.emplace_back("alpha", join(plan.alphas));
      params.emplace_back("eps", format_number(check.eps));
    }
    if (!plan.times.empty()) params.emplace_back("t", join_numbers(plan.times));
    if (n == "phi-trace" || n == "zeta") params.emplace_back("T", format_number(plan.horizon));
    if (n == "two-point-grid") params.emplace_back("grid", std::to_string(check.grid));
    if (n == "gauss-oracle") params.emplace_back("samples", std::to_string(plan.samples));
    if (n == "curvature" && check.expect) params.emplace_back("expect", format_number(*check.expect));
    for (const KindPolicy& kind : plan.policy->kinds) {
      const CaseTemplate& tpl = plan.kinds.at(kind.kind);
      params.emplace_back(std::string("tolerance.") + kind.kind, format_number(tpl.tolerance));
      params.emplace_back(std::string("asserted.") + kind.kind, tpl.asserted ? "true" : "false");
    }
    result.checks.push_back(std::move(outcome));
  }

  auto outcomes = run_tasks(tasks);
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    for (CaseOutcome& c : outcomes[t]) {
      for (const MarginRow& row : c.report.rows) {
        if (std::isnan(row.margin) || std::isnan(row.lhs) || std::isnan(row.rhs)) {
          throw NumericError(result.checks[task_owner[t]].name + " (" + c.kind + " " + c.label + "): NaN in results");
        }
      }
      result.checks[task_owner[t]].cases.push_back(std::move(c));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Report output

namespace {

std::string csv_cell(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string row_label(const CheckOutcome& check, const CaseOutcome& c) {
  std::string label = check.name + ":" + c.kind;
  if (!c.label.empty()) label += " " + c.label;
  return label;
}

json number_or_token(double value) {
  if (std::isfinite(value)) return value;
  return format_number(value);
}

json report_json(const std::vector<std::pair<std::string, std::string>>& params) {
  json out = json::object();
  for (const auto& [key, value] : params) out[key] = value;
  return out;
}

}  // namespace

std::string format_table(const CheckOutcome& check, OutputFormat format) {
  std::string out;
  if (format == OutputFormat::csv) out += "check,state,time,margin,lhs,rhs\n";
  for (const CaseOutcome& c : check.cases) {
    const std::string label = row_label(check, c);
    for (const MarginRow& row : c.report.rows) {
      const std::string state = row.state ? std::to_string(*row.state) : "";
      const std::string time = row.time ? format_number(*row.time) : "";
      if (format == OutputFormat::csv) {
        out += csv_cell(label) + ',' + state + ',' + time + ',' + format_number(row.margin) + ',' +
               format_number(row.lhs) + ',' + format_number(row.rhs) + '\n';
      } else {
        auto cell = [](double v) {
          const std::string text = format_number(v);
          return std::isfinite(v) ? text : "\"" + text + "\"";
        };
        out += "{\"check\":" + json(label).dump() + ",\"state\":" + (state.empty() ? "null" : state) +
               ",\"time\":" + (time.empty() ? "null" : time) + ",\"margin\":" + cell(row.margin) +
               ",\"lhs\":" + cell(row.lhs) + ",\"rhs\":" + cell(row.rhs) + "}\n";
      }
    }
  }
  return out;
}

std::string summary_json(const ExperimentResult& result) {
  json doc;
  doc["software"] = "gammalab";
  doc["version"] = std::string(library_version());
  doc["seed"] = result.seed;
  doc["status"] = result.passed() ? "pass" : "fail";
  json space = json::object();
  for (const auto& [key, value] : result.space) space[key] = value;
  space["states"] = result.states;
  doc["space"] = space;
  doc["curvature"] = result.curvature ? number_or_token(*result.curvature) : json(nullptr);
  json checks = json::array();
  for (const CheckOutcome& check : result.checks) {
    json entry;
    entry["name"] = check.name;
    entry["table"] = check.table_name;
    entry["status"] = std::string(to_string(check.status()));
    entry["parameters"] = report_json(check.parameters);
    double worst = -kInf;
    const CaseOutcome* worst_case = nullptr;
    std::size_t samples = 0;
    json cases = json::array();
    for (const CaseOutcome& c : check.cases) {
      json item;
      item["kind"] = c.kind;
      item["label"] = c.label;
      item["asserted"] = c.asserted;
      item["skipped"] = c.skipped;
      item["pass"] = c.report.pass;
      item["tolerance"] = number_or_token(c.report.tolerance);
      item["samples"] = c.report.samples;
      if (!c.skipped && c.report.samples > 0) {
        item["worst_margin"] = number_or_token(c.report.worst_margin);
        item["mean_margin"] = number_or_token(c.report.mean_margin);
        item["worst_state"] = c.report.worst_state ? json(*c.report.worst_state) : json(nullptr);
        item["worst_time"] = c.report.worst_time ? json(*c.report.worst_time) : json(nullptr);
        if (c.asserted && c.report.worst_margin > worst) {
          worst = c.report.worst_margin;
          worst_case = &c;
        }
      }
      if (!c.note.empty()) item["note"] = c.note;
      samples += c.report.samples;
      cases.push_back(std::move(item));
    }
    entry["samples"] = samples;
    if (worst_case) {
      entry["worst_asserted_margin"] = number_or_token(worst);
      entry["worst_case"] = row_label(check, *worst_case);
    }
    entry["cases"] = std::move(cases);
    checks.push_back(std::move(entry));
  }
  doc["checks"] = std::move(checks);
  return doc.dump(2) + "\n";
}

void write_reports(const ExperimentResult& result, const std::filesystem::path& dir, OutputFormat format) {
  std::filesystem::create_directories(dir);
  auto write = [](const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
  };
  write(dir / "summary.json", summary_json(result));
  const std::string extension = format == OutputFormat::csv ? ".csv" : ".jsonl";
  for (const CheckOutcome& check : result.checks) write(dir / (check.table_name + extension), format_table(check, format));
}

int run_and_write(const ExperimentConfig& config, const MarkovTriple* triple) {
  const ExperimentResult result = run_experiment(config, triple);
  write_reports(result, config.out_dir.empty() ? std::filesystem::path("gammalab-out") : config.out_dir, config.format);
  return result.passed() ? 0 : 1;
}

std::string merge_summaries(const std::vector<std::filesystem::path>& summaries) {
  json merged;
  merged["software"] = "gammalab";
  merged["version"] = std::string(library_version());
  json runs = json::array();
  json table = json::array();
  bool pass = true;
  for (const std::filesystem::path& path : summaries) {
    std::ifstream in(path);
    if (!in) throw ParseError(path.string(), 0, 0, "cannot open summary");
    json doc;
    try {
      doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string(), 0, static_cast<std::size_t>(e.byte), e.what());
    }
    if (!doc.contains("checks") || !doc["checks"].is_array()) throw ParseError(path.string(), 0, 0, "not a gammalab summary");
    const std::string status = doc.value("status", "fail");
    pass = pass && status == "pass";
    for (const json& check : doc["checks"]) {
      json row;
      row["run"] = path.string();
      row["check"] = check.value("name", "");
      row["status"] = check.value("status", "");
      row["worst_asserted_margin"] = check.contains("worst_asserted_margin") ? check["worst_asserted_margin"] : json(nullptr);
      table.push_back(std::move(row));
    }
    json run;
    run["path"] = path.string();
    run["summary"] = std::move(doc);
    runs.push_back(std::move(run));
  }
  merged["status"] = pass ? "pass" : "fail";
  merged["checks"] = std::move(table);
  merged["runs"] = std::move(runs);
  return merged.dump(2) + "\n";
}

}  // namespace gammalab
