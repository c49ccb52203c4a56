#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccat/error.hpp"
#include "ccat/nn/tape.hpp"

namespace ccat::training {

inline constexpr double kMosMin = 1.0;
inline constexpr double kMosMax = 5.0;

inline void check_label(double mos) {
  if (!(mos >= kMosMin && mos <= kMosMax))
    throw LabelError("MOS label " + std::to_string(mos) + " outside [1, 5]");
}

/// Frame-level weight 10^(M - 5): full weight for perfect clips, shrinking
/// tenfold per MOS point below the ceiling.
inline double mos_weight(double mos) {
  check_label(mos);
  return std::pow(10.0, mos - kMosMax);
}

/// One utterance's contribution to the objective.
struct LossTerm {
  double label = 0.0;
  double utterance_pred = 0.0;
  std::span<const double> frame_preds;
  std::span<const std::uint8_t> valid_mask;  // empty means every frame is valid
};

namespace detail {

inline bool valid_at(std::span<const std::uint8_t> mask, std::size_t t) {
  return mask.empty() || mask[t] != 0;
}

inline std::size_t valid_count(std::span<const std::uint8_t> mask, std::size_t frames) {
  if (mask.empty()) return frames;
  if (mask.size() != frames) throw ShapeError("mask length differs from frame count");
  std::size_t n = 0;
  for (auto m : mask) n += m != 0;
  return n;
}

}  // namespace detail

/// L = 1/X sum_x [ (M_x - U_x)^2 + a(M_x)/T_x sum_{valid t} (M_x - F_{x,t})^2 ],
/// T_x counting only valid frames.
inline double ccat_loss(std::span<const LossTerm> batch) {
  if (batch.empty()) throw EmptyBatch("loss over an empty batch");
  double total = 0.0;
  for (const auto& u : batch) {
    const double alpha = mos_weight(u.label);
    const std::size_t tx = detail::valid_count(u.valid_mask, u.frame_preds.size());
    if (tx == 0) throw EmptyInput("utterance without valid frames");
    double frame_sq = 0.0;
    for (std::size_t t = 0; t < u.frame_preds.size(); ++t)
      if (detail::valid_at(u.valid_mask, t)) frame_sq += (u.label - u.frame_preds[t]) * (u.label - u.frame_preds[t]);
    const double du = u.label - u.utterance_pred;
    total += du * du + alpha / static_cast<double>(tx) * frame_sq;
  }
  return total / static_cast<double>(batch.size());
}

/// Differentiable form of ccat_loss over tensors produced by the network:
/// `utterance[x]` is [1], `frames[x]` is [T_x].
template <class T>
nn::Tensor<T> ccat_loss(std::span<const nn::Tensor<T>> utterance, std::span<const nn::Tensor<T>> frames,
                        std::span<const double> labels, std::span<const std::vector<std::uint8_t>> masks) {
  const std::size_t X = labels.size();
  if (X == 0) throw EmptyBatch("loss over an empty batch");
  if (utterance.size() != X || frames.size() != X || masks.size() != X)
    throw ShapeError("loss inputs disagree on batch size");
  auto& tp = *utterance.front().tape();

  struct Item {
    std::size_t utt_id, frame_id;
    double label, frame_coef;  // frame_coef = alpha / T_x
    std::vector<std::uint8_t> mask;
  };
  std::vector<Item> items;
  items.reserve(X);
  double total = 0.0;
  bool rg = false;
  for (std::size_t x = 0; x < X; ++x) {
    const double alpha = mos_weight(labels[x]);
    const auto& fv = frames[x].values();
    const std::size_t tx = detail::valid_count(masks[x], fv.size());
    if (tx == 0) throw EmptyInput("utterance without valid frames");
    const double coef = alpha / static_cast<double>(tx);
    double frame_sq = 0.0;
    for (std::size_t t = 0; t < fv.size(); ++t)
      if (detail::valid_at(masks[x], t)) {
        const double d = labels[x] - static_cast<double>(fv[t]);
        frame_sq += d * d;
      }
    const double du = labels[x] - static_cast<double>(utterance[x].item());
    total += du * du + coef * frame_sq;
    items.push_back({utterance[x].id(), frames[x].id(), labels[x], coef, masks[x]});
    rg = rg || utterance[x].requires_grad() || frames[x].requires_grad();
  }
  const double invX = 1.0 / static_cast<double>(X);
  const std::size_t out = tp.size();
  std::function<void()> bw;
  if (rg && tp.grad_enabled()) {
    bw = [&tp, items = std::move(items), out, invX] {
      const double g = static_cast<double>(tp.grad_of(out)[0]);
      for (const auto& it : items) {
        if (tp.node(it.utt_id).requires_grad) {
          const double u = static_cast<double>(tp.node(it.utt_id).value[0]);
          tp.grad_of(it.utt_id)[0] += static_cast<T>(g * invX * 2.0 * (u - it.label));
        }
        if (tp.node(it.frame_id).requires_grad) {
          const auto& fv = tp.node(it.frame_id).value;
          auto& gf = tp.grad_of(it.frame_id);
          for (std::size_t t = 0; t < fv.size(); ++t)
            if (detail::valid_at(it.mask, t))
              gf[t] += static_cast<T>(g * invX * it.frame_coef * 2.0 * (static_cast<double>(fv[t]) - it.label));
        }
      }
    };
  }
  return nn::Tensor<T>(&tp, tp.push(nn::Shape{1}, std::vector<T>{static_cast<T>(total * invX)}, rg, std::move(bw)));
}

}  // namespace ccat::training
