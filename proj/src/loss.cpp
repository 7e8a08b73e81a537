#include "vrdone/loss.hpp"

#include "vrdone/json_fields.hpp"
#include "vrdone/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace vrdone {

namespace {

bool frame_valid(const Mask& valid, std::size_t t) { return valid.empty() || valid[t] != 0; }

/// log(sigmoid(x)) computed without overflow.
double log_sigmoid(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

double logsumexp(std::span<const double> v) {
  const double mx = *std::max_element(v.begin(), v.end());
  double z = 0.0;
  for (double x : v) z += std::exp(x - mx);
  return mx + std::log(z);
}

std::span<const double> row_span(const Matrix& m, Index r) {
  return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

}  // namespace

void LossConfig::validate() const {
  if (!(weights.cls > 0 && weights.mask_focal > 0 && weights.mask_dice > 0)) {
    throw detail::ConfigError("loss: weights must be positive");
  }
  if (focal_alpha < 0 || focal_alpha > 1) throw detail::ConfigError("loss.focal_alpha must be in [0,1]");
  if (focal_gamma < 0) throw detail::ConfigError("loss.focal_gamma must be >= 0");
  if (dice_eps < 0) throw detail::ConfigError("loss.dice_eps must be >= 0");
  if (no_object_weight <= 0) throw detail::ConfigError("loss.no_object_weight must be positive");
}

void to_json(nlohmann::json& j, const LossConfig& c) {
  j = {{"lambda_cls", c.weights.cls},
       {"lambda_mf", c.weights.mask_focal},
       {"lambda_md", c.weights.mask_dice},
       {"focal_alpha", c.focal_alpha},
       {"focal_gamma", c.focal_gamma},
       {"dice_eps", c.dice_eps},
       {"no_object_weight", c.no_object_weight}};
}

void from_json(const nlohmann::json& j, LossConfig& c) {
  const std::string p = "loss";
  detail::reject_unknown(j, {"lambda_cls", "lambda_mf", "lambda_md", "focal_alpha", "focal_gamma",
                             "dice_eps", "no_object_weight"},
                         p);
  detail::read_optional(j, "lambda_cls", c.weights.cls, p);
  detail::read_optional(j, "lambda_mf", c.weights.mask_focal, p);
  detail::read_optional(j, "lambda_md", c.weights.mask_dice, p);
  detail::read_optional(j, "focal_alpha", c.focal_alpha, p);
  detail::read_optional(j, "focal_gamma", c.focal_gamma, p);
  detail::read_optional(j, "dice_eps", c.dice_eps, p);
  detail::read_optional(j, "no_object_weight", c.no_object_weight, p);
  c.validate();
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double cross_entropy(std::span<const double> logits, int target) {
  if (target < 0 || target >= static_cast<int>(logits.size())) {
    throw std::out_of_range("cross_entropy: target class out of range");
  }
  return logsumexp(logits) - logits[static_cast<std::size_t>(target)];
}

double focal_loss(std::span<const double> probs, std::span<const double> target, double alpha,
                  double gamma, const Mask& valid) {
  if (probs.size() != target.size()) throw std::invalid_argument("focal_loss: length mismatch");
  double total = 0.0;
  int count = 0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (!frame_valid(valid, t)) continue;
    const bool pos = target[t] > 0.5;
    const double pt = pos ? probs[t] : 1.0 - probs[t];
    const double at = pos ? alpha : 1.0 - alpha;
    if (pt < 1.0) {
      total += -at * std::pow(1.0 - pt, gamma) * std::log(std::max(pt, std::numeric_limits<double>::min()));
    }
    ++count;
  }
  return count ? total / count : 0.0;
}

double dice_loss(std::span<const double> probs, std::span<const double> target, double eps,
                 const Mask& valid) {
  if (probs.size() != target.size()) throw std::invalid_argument("dice_loss: length mismatch");
  double inter = 0.0, sp = 0.0, sm = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    if (!frame_valid(valid, t)) continue;
    inter += probs[t] * target[t];
    sp += probs[t];
    sm += target[t];
  }
  const double den = sp + sm + eps;
  if (den == 0.0) return 0.0;
  return 1.0 - (2.0 * inter + eps) / den;
}

namespace {

/// Focal loss from a logit, in the stable log-sigmoid form used by both routes.
double focal_from_logit(double x, bool pos, double alpha, double gamma) {
  const double s = pos ? 1.0 : -1.0;
  const double log_pt = log_sigmoid(s * x);
  const double one_minus_pt = sigmoid(-s * x);
  const double at = pos ? alpha : 1.0 - alpha;
  return -at * std::pow(one_minus_pt, gamma) * log_pt;
}

}  // namespace

Matrix pair_cost(const OutputValues& pred, const GroundTruthSet& gt, const Mask& valid,
                 const LossConfig& cfg) {
  const Index nq = pred.class_logits.rows();
  const int g = gt.size();
  if (g > nq) {
    throw std::invalid_argument("pair_cost: " + std::to_string(g) + " ground-truth relations exceed " +
                                std::to_string(nq) + " queries");
  }
  const Index len = pred.mask_logits.cols();
  if (gt.masks.rows() != g || (g > 0 && gt.masks.cols() != len)) {
    throw std::invalid_argument("pair_cost: ground-truth mask shape mismatch");
  }
  Matrix cost(nq, g);
  Matrix probs = pred.mask_logits.unaryExpr([](double x) { return sigmoid(x); });
  for (Index i = 0; i < nq; ++i) {
    const auto logits = row_span(pred.class_logits, i);
    for (int j = 0; j < g; ++j) {
      const double ce = cross_entropy(logits, gt.classes[static_cast<std::size_t>(j)]);
      // Focal from logits avoids log(0) on saturated predictions.
      double fl = 0.0;
      int count = 0;
      for (Index t = 0; t < len; ++t) {
        if (!frame_valid(valid, static_cast<std::size_t>(t))) continue;
        fl += focal_from_logit(pred.mask_logits(i, t), gt.masks(j, t) > 0.5, cfg.focal_alpha,
                               cfg.focal_gamma);
        ++count;
      }
      fl = count ? fl / count : 0.0;
      const double dl = dice_loss(row_span(probs, i), row_span(gt.masks, j), cfg.dice_eps, valid);
      cost(i, j) = cfg.weights.cls * ce + cfg.weights.mask_focal * fl + cfg.weights.mask_dice * dl;
    }
  }
  return cost;
}

namespace ag_loss {

ag::Var cross_entropy(const ag::Var& logits, const std::vector<int>& targets,
                      const std::vector<double>& row_weights) {
  const Index rows = logits.rows();
  const Index cols = logits.cols();
  if (static_cast<Index>(targets.size()) != rows || static_cast<Index>(row_weights.size()) != rows) {
    throw std::invalid_argument("cross_entropy: target count mismatch");
  }
  double wsum = 0.0;
  for (double w : row_weights) wsum += w;
  Matrix softmax(rows, cols);
  double total = 0.0;
  for (Index r = 0; r < rows; ++r) {
    const auto l = row_span(logits.value(), r);
    const double lse = logsumexp(l);
    for (Index c = 0; c < cols; ++c) softmax(r, c) = std::exp(logits.value()(r, c) - lse);
    total += row_weights[static_cast<std::size_t>(r)] * (lse - l[static_cast<std::size_t>(targets[static_cast<std::size_t>(r)])]);
  }
  Matrix out(1, 1);
  out(0, 0) = wsum > 0 ? total / wsum : 0.0;
  return ag::make_result(std::move(out), {logits},
                         [softmax = std::move(softmax), targets, row_weights, wsum](ag::Node& self) {
                           Matrix g = softmax;
                           for (Index r = 0; r < g.rows(); ++r) {
                             g(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
                             g.row(r) *= row_weights[static_cast<std::size_t>(r)] / wsum;
                           }
                           self.inputs[0]->accumulate_expr(g * self.grad(0, 0));
                         });
}

ag::Var focal(const ag::Var& logit_row, std::span<const double> target, const Mask& valid,
              double alpha, double gamma) {
  const Index len = logit_row.cols();
  if (logit_row.rows() != 1 || static_cast<Index>(target.size()) != len) {
    throw std::invalid_argument("focal: shape mismatch");
  }
  int count = 0;
  double total = 0.0;
  Matrix d = Matrix::Zero(1, len);
  for (Index t = 0; t < len; ++t) {
    if (!frame_valid(valid, static_cast<std::size_t>(t))) continue;
    ++count;
    const double x = logit_row.value()(0, t);
    const bool pos = target[static_cast<std::size_t>(t)] > 0.5;
    total += focal_from_logit(x, pos, alpha, gamma);
    const double s = pos ? 1.0 : -1.0;
    const double log_pt = log_sigmoid(s * x);
    const double pt = sigmoid(s * x);
    const double q = sigmoid(-s * x);
    const double at = pos ? alpha : 1.0 - alpha;
    d(0, t) = -at * s * (-gamma * pt * std::pow(q, gamma) * log_pt + std::pow(q, gamma + 1.0));
  }
  Matrix out(1, 1);
  out(0, 0) = count ? total / count : 0.0;
  if (count) d /= count;
  return ag::make_result(std::move(out), {logit_row}, [d = std::move(d)](ag::Node& self) {
    self.inputs[0]->accumulate_expr(d * self.grad(0, 0));
  });
}

ag::Var dice(const ag::Var& logit_row, std::span<const double> target, const Mask& valid,
             double eps) {
  const Index len = logit_row.cols();
  if (logit_row.rows() != 1 || static_cast<Index>(target.size()) != len) {
    throw std::invalid_argument("dice: shape mismatch");
  }
  std::vector<double> p(static_cast<std::size_t>(len));
  double inter = 0.0, sp = 0.0, sm = 0.0;
  for (Index t = 0; t < len; ++t) {
    p[static_cast<std::size_t>(t)] = sigmoid(logit_row.value()(0, t));
    if (!frame_valid(valid, static_cast<std::size_t>(t))) continue;
    inter += p[static_cast<std::size_t>(t)] * target[static_cast<std::size_t>(t)];
    sp += p[static_cast<std::size_t>(t)];
    sm += target[static_cast<std::size_t>(t)];
  }
  const double num = 2.0 * inter + eps;
  const double den = sp + sm + eps;
  Matrix out(1, 1);
  out(0, 0) = den > 0 ? 1.0 - num / den : 0.0;
  Matrix d = Matrix::Zero(1, len);
  if (den > 0) {
    for (Index t = 0; t < len; ++t) {
      if (!frame_valid(valid, static_cast<std::size_t>(t))) continue;
      const double pt = p[static_cast<std::size_t>(t)];
      const double dp = -(2.0 * target[static_cast<std::size_t>(t)] * den - num) / (den * den);
      d(0, t) = dp * pt * (1.0 - pt);
    }
  }
  return ag::make_result(std::move(out), {logit_row}, [d = std::move(d)](ag::Node& self) {
    self.inputs[0]->accumulate_expr(d * self.grad(0, 0));
  });
}

}  // namespace ag_loss

LossTerms total_loss(const ag::Var& class_logits, const ag::Var& mask_logits,
                     const GroundTruthSet& gt, const std::vector<int>& assignment,
                     const Mask& valid, const LossConfig& cfg) {
  const Index nq = class_logits.rows();
  const int no_object = static_cast<int>(class_logits.cols()) - 1;
  if (static_cast<int>(assignment.size()) != gt.size()) {
    throw std::invalid_argument("total_loss: assignment size differs from ground truth");
  }
  std::vector<int> targets(static_cast<std::size_t>(nq), no_object);
  std::vector<double> weights(static_cast<std::size_t>(nq), cfg.no_object_weight);
  for (int j = 0; j < gt.size(); ++j) {
    const int q = assignment[static_cast<std::size_t>(j)];
    if (q < 0 || q >= nq) throw std::invalid_argument("total_loss: assignment out of range");
    targets[static_cast<std::size_t>(q)] = gt.classes[static_cast<std::size_t>(j)];
    weights[static_cast<std::size_t>(q)] = 1.0;
  }
  LossTerms terms;
  ag::Var cls = ag::scale(ag_loss::cross_entropy(class_logits, targets, weights), cfg.weights.cls);
  terms.cls = cls.item();
  terms.total = cls;
  if (gt.size() == 0) return terms;

  std::vector<ag::Var> mask_terms;
  ag::Var focal_sum, dice_sum;
  for (int j = 0; j < gt.size(); ++j) {
    ag::Var logits = ag::row(mask_logits, assignment[static_cast<std::size_t>(j)]);
    const auto target = row_span(gt.masks, j);
    ag::Var f = ag_loss::focal(logits, target, valid, cfg.focal_alpha, cfg.focal_gamma);
    ag::Var d = ag_loss::dice(logits, target, valid, cfg.dice_eps);
    focal_sum = focal_sum.defined() ? ag::add(focal_sum, f) : f;
    dice_sum = dice_sum.defined() ? ag::add(dice_sum, d) : d;
  }
  const double inv_g = 1.0 / gt.size();
  ag::Var focal = ag::scale(focal_sum, cfg.weights.mask_focal * inv_g);
  ag::Var dice = ag::scale(dice_sum, cfg.weights.mask_dice * inv_g);
  terms.focal = focal.item();
  terms.dice = dice.item();
  terms.total = ag::add(ag::add(cls, focal), dice);
  return terms;
}

LossTerms set_prediction_loss(const ModelOutput& out, const GroundTruthSet& gt, const Mask& valid,
                              const LossConfig& cfg, std::vector<int>* assignment) {
  auto match = [&](const ag::Var& cls, const ag::Var& msk) {
    return hungarian(pair_cost({cls.value(), msk.value()}, gt, valid, cfg));
  };
  std::vector<int> sigma = match(out.class_logits, out.mask_logits);
  LossTerms terms = total_loss(out.class_logits, out.mask_logits, gt, sigma, valid, cfg);
  for (const auto& [cls, msk] : out.aux) {
    LossTerms aux = total_loss(cls, msk, gt, match(cls, msk), valid, cfg);
    terms.total = ag::add(terms.total, aux.total);
    terms.cls += aux.cls;
    terms.focal += aux.focal;
    terms.dice += aux.dice;
  }
  if (assignment) *assignment = std::move(sigma);
  return terms;
}

}  // namespace vrdone
