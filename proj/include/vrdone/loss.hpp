#pragma once

#include "vrdone/detector.hpp"
#include "vrdone/pair_sample.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <vector>

namespace vrdone {

struct LossWeights {
  double cls = 2.0;
  double mask_focal = 2.0;
  double mask_dice = 5.0;
};

struct LossConfig {
  LossWeights weights;
  double focal_alpha = 0.25;
  double focal_gamma = 2.0;
  double dice_eps = 1.0;
  /// Relative CE weight of the no-relation class (1.0 = plain mean).
  double no_object_weight = 1.0;

  void validate() const;
};

void to_json(nlohmann::json& j, const LossConfig& c);
void from_json(const nlohmann::json& j, LossConfig& c);

// Scalar reference forms. Frames with valid[t] == 0 are ignored; an empty
// mask means every frame is valid.

double sigmoid(double x);
/// log-sum-exp(logits) - logits[target].
double cross_entropy(std::span<const double> logits, int target);
/// Mean over valid frames of -alpha_t (1 - p_t)^gamma log p_t.
double focal_loss(std::span<const double> probs, std::span<const double> target, double alpha,
                  double gamma, const Mask& valid = {});
/// 1 - (2 sum(p m) + eps) / (sum(p) + sum(m) + eps) over valid frames.
double dice_loss(std::span<const double> probs, std::span<const double> target, double eps,
                 const Mask& valid = {});

/// cost[i, j] = w_cls CE(class_i, c_j) + w_mf Focal(mask_i, m_j) + w_md Dice(mask_i, m_j).
Matrix pair_cost(const OutputValues& pred, const GroundTruthSet& gt, const Mask& valid,
                 const LossConfig& cfg);

struct LossTerms {
  ag::Var total;
  double cls = 0.0;    // weighted
  double focal = 0.0;  // weighted
  double dice = 0.0;   // weighted
};

/// CE over all queries (matched -> gt class, others -> no-relation) plus
/// focal and dice mask terms averaged over matched pairs.
LossTerms total_loss(const ag::Var& class_logits, const ag::Var& mask_logits,
                     const GroundTruthSet& gt, const std::vector<int>& assignment,
                     const Mask& valid, const LossConfig& cfg);

/// Matching (gradients detached) followed by total_loss, including aux heads.
LossTerms set_prediction_loss(const ModelOutput& out, const GroundTruthSet& gt, const Mask& valid,
                              const LossConfig& cfg, std::vector<int>* assignment = nullptr);

// Graph ops backing total_loss.
namespace ag_loss {
/// Weighted mean CE over rows of `logits`.
ag::Var cross_entropy(const ag::Var& logits, const std::vector<int>& targets,
                      const std::vector<double>& row_weights);
/// Focal loss of a 1 x L logit row against a binary target.
ag::Var focal(const ag::Var& logit_row, std::span<const double> target, const Mask& valid,
              double alpha, double gamma);
ag::Var dice(const ag::Var& logit_row, std::span<const double> target, const Mask& valid,
             double eps);
}  // namespace ag_loss

}  // namespace vrdone
