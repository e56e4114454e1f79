#include "cot2/construction/construction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "cot2/common/error.hpp"

namespace cot2::construction {
namespace {

std::vector<double> softmax(std::span<const double> scores, double c) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += w[i] = std::exp(c * (scores[i] - mx));
  for (double& x : w) x /= total;
  return w;
}

// Hard limit of softmax(c x) as c grows, required to have a single maximum.
std::vector<double> hard_select(std::span<const double> scores, const char* what) {
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size(), 0.0);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (scores[i] == mx) {
      w[i] = 1.0;
      ++hits;
    }
  }
  if (hits != 1) {
    throw InvariantError(std::string(what) + ": " + std::to_string(hits) +
                         " candidates share the maximal score");
  }
  return w;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_shape(const ConstructionConfig& cfg, const TrigToken& t, const char* what) {
  if (t.content.size() != cfg.content_size() || t.position.size() != cfg.position_size()) {
    throw UsageError(std::string(what) + ": token does not match the configured dimension");
  }
}

}  // namespace

ConstructionConfig ConstructionConfig::for_mnns(std::size_t n, int max_digit, Hardness mode,
                                                double c) {
  ConstructionConfig cfg;
  cfg.n = n;
  cfg.sum_bound = static_cast<int>(n) * max_digit;
  cfg.omega = std::numbers::pi / (2.0 * (cfg.sum_bound + 1));
  cfg.mode = mode;
  cfg.c = c;
  cfg.validate();
  return cfg;
}

void ConstructionConfig::validate() const {
  if (n == 0 || n > 20) throw ConfigError("construction: n must lie in 1..20");
  if (sum_bound < 0 || !(omega > 0.0) || !(omega * sum_bound < std::numbers::pi / 2)) {
    throw ConfigError("construction: need omega > 0 and omega * S < pi / 2");
  }
  if (mode == Hardness::Finite && !(c > 0.0)) throw ConfigError("construction: c must be positive");
}

std::size_t TrigToken::position_index() const {
  std::size_t hot = 0, ones = 0;
  for (std::size_t i = 0; i < position.size(); ++i) {
    if (position[i] == 1.0) {
      hot = i;
      ++ones;
    } else if (position[i] != 0.0) {
      throw InvariantError("token: positional block is not one-hot");
    }
  }
  if (ones != 1) throw InvariantError("token: positional block is not one-hot");
  return hot + 1;
}

std::vector<double> TrigToken::embedding() const {
  std::vector<double> out = content;
  out.insert(out.end(), position.begin(), position.end());
  return out;
}

TrigToken blank_token(const ConstructionConfig& cfg) {
  return {std::vector<double>(cfg.content_size(), 0.0), std::vector<double>(cfg.position_size(), 0.0)};
}

TrigToken value_token(const ConstructionConfig& cfg, long value, std::size_t position) {
  if (position == 0 || position > cfg.position_size()) {
    throw UsageError("value_token: position outside 1..n+2");
  }
  TrigToken t = blank_token(cfg);
  t.content[0] = std::cos(cfg.omega * static_cast<double>(value));
  t.content[1] = std::sin(cfg.omega * static_cast<double>(value));
  t.position[position - 1] = 1.0;
  return t;
}

std::vector<double> SparseMatrix::apply(std::span<const double> x) const {
  if (x.size() != cols) throw UsageError("sparse matrix: input size mismatch");
  std::vector<double> y(rows, 0.0);
  for (const Entry& e : entries) y[e.row] += e.value * x[e.col];
  return y;
}

SparseMatrix rotation_matrix(const ConstructionConfig& cfg) {
  const std::size_t p = cfg.position_size();
  SparseMatrix r{p, p, {}};
  for (std::size_t j = 0; j < p; ++j) r.entries.push_back({(j + p - 1) % p, j, 1.0});
  return r;
}

SparseMatrix attention_weights_matrix(const ConstructionConfig& cfg) {
  const std::size_t off = cfg.content_size();
  const double scale = cfg.mode == Hardness::Finite ? cfg.c : 1.0;
  SparseMatrix w{cfg.dim(), cfg.dim(), {}};
  for (const auto& e : rotation_matrix(cfg).entries) w.entries.push_back({off + e.row, off + e.col, scale * e.value});
  return w;
}

std::vector<double> attention_weights(const ConstructionConfig& cfg, const TrigToken& query,
                                      std::span<const TrigToken> sequence) {
  check_shape(cfg, query, "attention");
  query.position_index();
  if (sequence.empty()) throw UsageError("attention: empty sequence");
  const SparseMatrix w = attention_weights_matrix(cfg);
  // q^T W as a row, then dot with every key
  const std::vector<double> q = query.embedding();
  std::vector<double> qw(cfg.dim(), 0.0);
  for (const auto& e : w.entries) qw[e.col] += q[e.row] * e.value;
  std::vector<double> scores;
  for (const TrigToken& z : sequence) {
    check_shape(cfg, z, "attention");
    z.position_index();
    scores.push_back(dot(qw, z.embedding()));
  }
  // the maximum must be unique for the selection to be well defined
  std::vector<double> hard = hard_select(scores, "attention");
  if (cfg.mode == Hardness::Exact) return hard;
  // scores already carry the factor c
  return softmax(scores, 1.0);
}

TrigToken rotation_attention(const ConstructionConfig& cfg, const TrigToken& query,
                             std::span<const TrigToken> sequence) {
  const std::vector<double> w = attention_weights(cfg, query, sequence);
  TrigToken out = blank_token(cfg);
  for (std::size_t j = 0; j < sequence.size(); ++j) {
    if (w[j] == 0.0) continue;
    for (std::size_t i = 0; i < out.content.size(); ++i) out.content[i] += w[j] * sequence[j].content[i];
    for (std::size_t i = 0; i < out.position.size(); ++i) out.position[i] += w[j] * sequence[j].position[i];
  }
  return out;
}

std::vector<double> route_weights(const ConstructionConfig& cfg, const TrigToken& token) {
  check_shape(cfg, token, "routing");
  // w_j = (0, p_j) for experts j = 1..n+1
  std::vector<double> scores(cfg.n + 1);
  for (std::size_t j = 0; j < scores.size(); ++j) scores[j] = token.position[j];
  if (cfg.mode == Hardness::Exact) return hard_select(scores, "routing");
  return softmax(scores, cfg.c);
}

std::size_t route_expert(const ConstructionConfig& cfg, const TrigToken& token) {
  const std::vector<double> w = hard_select(route_weights(cfg, token), "routing");
  return static_cast<std::size_t>(std::find(w.begin(), w.end(), 1.0) - w.begin()) + 1;
}

std::vector<double> GatedMlp::apply(std::span<const double> z_prev, std::span<const double> z_curr) const {
  std::vector<double> x(z_prev.begin(), z_prev.end());
  x.insert(x.end(), z_curr.begin(), z_curr.end());
  std::vector<double> a = w1.apply(x);
  const std::vector<double> b = w2.apply(x);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] *= b[i];
  return w3.apply(a);
}

GatedMlp partial_sum_mlp(const ConstructionConfig& cfg, std::size_t j) {
  if (j == 0 || j > cfg.n) {
    throw ConfigError("partial_sum_mlp: expert " + std::to_string(j) + " outside 1.." +
                      std::to_string(cfg.n));
  }
  const std::size_t dc = cfg.content_size();
  const std::size_t active = std::size_t{1} << j;  // coordinates of the 2^{j-1} input pairs
  const std::size_t hidden = 4 * active;
  const std::size_t cos_d = dc, sin_d = dc + 1;  // first pair of z_curr inside x
  GatedMlp mlp{{hidden, 2 * dc, {}}, {hidden, 2 * dc, {}}, {dc, hidden, {}}};
  // Hidden blocks: cos d * z, sin d * (W+ z), sin d * (W- z), cos d * z, with
  // W+ = [[0,-1],[1,0]] and W- = [[0,1],[-1,0]] on every pair.
  for (std::size_t a = 0; a < active; ++a) {
    const bool is_cos = a % 2 == 0;
    const std::size_t partner = is_cos ? a + 1 : a - 1;
    const double rot_plus = is_cos ? -1.0 : 1.0;
    mlp.w1.entries.push_back({a, cos_d, 1.0});
    mlp.w2.entries.push_back({a, a, 1.0});
    mlp.w1.entries.push_back({active + a, sin_d, 1.0});
    mlp.w2.entries.push_back({active + a, partner, rot_plus});
    mlp.w1.entries.push_back({2 * active + a, sin_d, 1.0});
    mlp.w2.entries.push_back({2 * active + a, partner, -rot_plus});
    mlp.w1.entries.push_back({3 * active + a, cos_d, 1.0});
    mlp.w2.entries.push_back({3 * active + a, a, 1.0});
    // W3 sums the first two blocks into place and the last two into the
    // shifted half, then halves everything.
    mlp.w3.entries.push_back({a, a, 0.5});
    mlp.w3.entries.push_back({a, active + a, 0.5});
    mlp.w3.entries.push_back({active + a, 2 * active + a, 0.5});
    mlp.w3.entries.push_back({active + a, 3 * active + a, 0.5});
  }
  return mlp;
}

TrigToken partial_sum_expert(const ConstructionConfig& cfg, std::size_t j, const TrigToken& z_prev,
                             const TrigToken& z_curr) {
  check_shape(cfg, z_prev, "partial_sum_expert");
  check_shape(cfg, z_curr, "partial_sum_expert");
  TrigToken out = blank_token(cfg);
  out.content = partial_sum_mlp(cfg, j).apply(z_prev.content, z_curr.content);
  return out;
}

TrigToken read_off_expert(const ConstructionConfig& cfg, const TrigToken& z) {
  check_shape(cfg, z, "read_off_expert");
  const std::size_t pairs = cfg.content_size() / 2;
  std::vector<double> zc(pairs), zs(pairs);
  double scale = 0.0;
  for (std::size_t l = 0; l < pairs; ++l) {
    zc[l] = z.content[2 * l];
    zs[l] = z.content[2 * l + 1];
    scale = std::max(scale, std::hypot(zc[l], zs[l]));
  }
  if (!(scale > 0.0)) throw InvariantError("read_off_expert: no encoded sums");
  const double gate_margin = std::sin(cfg.omega / 2);
  const double select_margin = 1.0 - std::cos(cfg.omega);
  std::vector<double> filter(pairs);
  bool any = false;
  for (std::size_t l = 0; l < pairs; ++l) {
    const double g = 1.0 + zs[l] / (scale * gate_margin);
    double gate;
    if (cfg.mode == Hardness::Exact) {
      gate = g >= 0.0 ? 1.0 : 0.0;
    } else {
      gate = 1.0 / (1.0 + std::exp(-cfg.c * g));
    }
    // empty slots pass the gate with a zero filter value; they do not count
    any |= g >= 0.0 && std::hypot(zc[l], zs[l]) >= 0.5 * scale;
    filter[l] = zc[l] / scale * gate / select_margin;
  }
  if (!any) throw InvariantError("read_off_expert: no nonnegative sum is encoded");
  std::vector<double> w(pairs, 0.0);
  if (cfg.mode == Hardness::Exact) {
    w[static_cast<std::size_t>(std::max_element(filter.begin(), filter.end()) - filter.begin())] = 1.0;
  } else {
    w = softmax(filter, cfg.c);
  }
  TrigToken out = blank_token(cfg);
  for (std::size_t l = 0; l < pairs; ++l) {
    out.content[0] += w[l] * zc[l];
    out.content[1] += w[l] * zs[l];
  }
  return out;
}

long decode_angle(double cos_part, double sin_part, double omega) {
  const double units = std::atan2(sin_part, cos_part) / omega;
  const double nearest = std::round(units);
  if (!(std::abs(units - nearest) < 1e-9)) {
    throw InvariantError("decode_angle: angle is " + std::to_string(units) +
                         " units, not an integer multiple of omega");
  }
  return static_cast<long>(nearest);
}

std::vector<long> decode_sums(const ConstructionConfig& cfg, const TrigToken& token,
                              std::size_t count) {
  if (2 * count > token.content.size()) throw UsageError("decode_sums: too many pairs requested");
  std::vector<long> out;
  for (std::size_t l = 0; l < count; ++l) {
    out.push_back(decode_angle(token.content[2 * l], token.content[2 * l + 1], cfg.omega));
  }
  return out;
}

ConstructionTrace run_construction_trace(const ConstructionConfig& cfg, std::span<const int> digits) {
  cfg.validate();
  if (digits.size() != cfg.n) {
    throw UsageError("run_construction: expected " + std::to_string(cfg.n) + " digits, got " +
                     std::to_string(digits.size()));
  }
  // digits at positions 1..n, arrow at n+1, the dummy zero at n+2
  std::vector<TrigToken> seq;
  for (std::size_t i = 0; i < cfg.n; ++i) {
    if (std::abs(digits[i]) > cfg.sum_bound) throw UsageError("run_construction: digit exceeds S");
    seq.push_back(value_token(cfg, digits[i], i + 1));
  }
  TrigToken arrow = blank_token(cfg);
  arrow.position[cfg.n] = 1.0;
  seq.push_back(arrow);
  seq.push_back(value_token(cfg, 0, cfg.n + 2));

  ConstructionTrace trace;
  TrigToken query = seq.back();
  for (std::size_t step = 1; step <= cfg.n + 1; ++step) {
    const TrigToken attended = rotation_attention(cfg, query, seq);
    const std::vector<double> route = route_weights(cfg, attended);
    TrigToken out = blank_token(cfg);
    for (std::size_t e = 0; e < route.size(); ++e) {
      if (route[e] == 0.0) continue;
      const TrigToken y = e < cfg.n ? partial_sum_expert(cfg, e + 1, query, attended)
                                    : read_off_expert(cfg, query);
      for (std::size_t i = 0; i < out.content.size(); ++i) out.content[i] += route[e] * y.content[i];
    }
    // output positions cycle through p_1, p_2, ...
    out.position[(step - 1) % cfg.position_size()] = 1.0;
    seq.push_back(out);
    trace.outputs.push_back(out);
    query = out;
  }
  const TrigToken& last = trace.outputs.back();
  trace.answer = decode_angle(last.content[0], last.content[1], cfg.omega);
  return trace;
}

long run_construction(const ConstructionConfig& cfg, std::span<const int> digits) {
  return run_construction_trace(cfg, digits).answer;
}

long run_construction(std::span<const int> digits) {
  if (digits.empty()) throw UsageError("run_construction: no digits");
  int mx = 0;
  for (int d : digits) mx = std::max(mx, std::abs(d));
  return run_construction(ConstructionConfig::for_mnns(digits.size(), mx), digits);
}

}  // namespace cot2::construction
