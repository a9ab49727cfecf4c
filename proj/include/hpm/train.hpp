#ifndef HPM_TRAIN_HPP
#define HPM_TRAIN_HPP

#include "hpm/model.hpp"

#include <functional>
#include <numeric>

namespace hpm {

// Adam with transformer-style moment settings (beta1 0.9, beta2 0.98, eps 1e-9)
// and global-norm gradient clipping.
template <class S>
class Adam {
 public:
  Adam(nn::ParamStore<S>& params, double lr, double clip = 1.0,
       double beta1 = 0.9, double beta2 = 0.98, double eps = 1e-9)
      : params_(params), lr_(lr), clip_(clip), b1_(beta1), b2_(beta2), eps_(eps) {
    for (size_t i = 0; i < params.size(); ++i) {
      m_.push_back(Mat<S>::Zero(params.at(i).rows(), params.at(i).cols()));
      v_.push_back(Mat<S>::Zero(params.at(i).rows(), params.at(i).cols()));
    }
  }

  void step() {
    ++t_;
    double norm2 = 0.0;
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& g = params_.at(i).grad_ref();
      norm2 += double(g.squaredNorm());
    }
    const double norm = std::sqrt(norm2);
    const double scale = (clip_ > 0.0 && norm > clip_) ? clip_ / norm : 1.0;
    const double bc1 = 1.0 - std::pow(b1_, t_);
    const double bc2 = 1.0 - std::pow(b2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_.at(i);
      Mat<S> g = p.grad_ref() * S(scale);
      m_[i] = S(b1_) * m_[i] + S(1.0 - b1_) * g;
      v_[i] = (S(b2_) * v_[i].array() + S(1.0 - b2_) * g.array().square()).matrix();
      p.value().array() -=
          S(lr_) * (m_[i].array() / S(bc1)) /
          ((v_[i].array() / S(bc2)).sqrt() + S(eps_));
    }
  }

  void set_lr(double lr) { lr_ = lr; }

 private:
  nn::ParamStore<S>& params_;
  double lr_, clip_, b1_, b2_, eps_;
  int t_ = 0;
  std::vector<Mat<S>> m_, v_;
};

// computes train-split normalization statistics for mel, pitch, and energy
inline NormStats compute_norm_stats(const std::vector<DubbingSample>& samples) {
  NormStats st;
  if (samples.empty()) return st;
  RVec sum = RVec::Zero(80), sq = RVec::Zero(80);
  double p_sum = 0, p_sq = 0, e_sum = 0, e_sq = 0;
  int64_t frames = 0;
  for (const auto& s : samples) {
    for (Eigen::Index t = 0; t < s.mel_target.rows(); ++t) {
      sum += s.mel_target.row(t).transpose();
      sq += s.mel_target.row(t).transpose().cwiseAbs2();
    }
    p_sum += s.pitch_target.sum();
    p_sq += s.pitch_target.squaredNorm();
    e_sum += s.energy_target.sum();
    e_sq += s.energy_target.squaredNorm();
    frames += s.mel_target.rows();
  }
  const double n = double(frames);
  st.mel_mean = sum / n;
  st.mel_std =
      ((sq / n - st.mel_mean.cwiseAbs2()).cwiseMax(1e-12)).cwiseSqrt();
  st.pitch_mean = p_sum / n;
  st.pitch_std = std::max(1e-6, std::sqrt(std::max(0.0, p_sq / n - st.pitch_mean * st.pitch_mean)));
  st.energy_mean = e_sum / n;
  st.energy_std = std::max(1e-6, std::sqrt(std::max(0.0, e_sq / n - st.energy_mean * st.energy_mean)));
  return st;
}

struct TrainResult {
  std::vector<LossReport> history;  // one report per step (batch average)
};

// deterministic given cfg.seed; teacher mel length fixes T_y during training
template <class S>
TrainResult train(DubbingModel<S>& model, std::vector<DubbingSample>& samples,
                  const std::function<void(const LossReport&)>& on_step = {}) {
  if (samples.empty()) throw EmptyInput("train: empty dataset");
  const Config& cfg = model.config();
  model.stats() = compute_norm_stats(samples);
  Adam<S> opt(model.params(), cfg.lr, cfg.grad_clip);
  Rng rng(cfg.seed ^ 0x5eedf00dULL);

  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  size_t cursor = order.size();  // forces an initial shuffle

  TrainResult result;
  for (int step = 1; step <= cfg.steps; ++step) {
    model.params().zero_grads();
    LossReport rep;
    ag::Var<S> batch_loss;
    const int bs = std::max(1, cfg.batch);
    for (int b = 0; b < bs; ++b) {
      if (cursor >= order.size()) {
        for (size_t i = order.size(); i > 1; --i)
          std::swap(order[i - 1], order[size_t(rng.uniform_int(0, int(i) - 1))]);
        cursor = 0;
      }
      DubbingSample& s = samples[size_t(order[cursor++])];
      auto out = model.forward(s, s.mel_target.rows());
      auto [l, r] = model.loss(s, out);
      batch_loss = batch_loss.valid() ? ag::add(batch_loss, l) : l;
      rep.mel += r.mel;
      rep.pitch += r.pitch;
      rep.energy += r.energy;
      rep.emo += r.emo;
      rep.total += r.total;
    }
    rep.mel /= bs;
    rep.pitch /= bs;
    rep.energy /= bs;
    rep.emo /= bs;
    rep.total /= bs;
    rep.step = step;
    if (!std::isfinite(rep.total))
      throw InvalidConfig("train: loss diverged (non-finite) at step " +
                          std::to_string(step));
    batch_loss = ag::scale(batch_loss, S(1) / S(bs));
    ag::backward(batch_loss);
    opt.step();
    result.history.push_back(rep);
    if (on_step) on_step(rep);
  }
  return result;
}

// average held-out losses without updating parameters
template <class S>
LossReport evaluate(DubbingModel<S>& model, std::vector<DubbingSample>& samples) {
  if (samples.empty()) throw EmptyInput("evaluate: empty dataset");
  LossReport rep;
  for (auto& s : samples) {
    auto out = model.forward(s, s.mel_target.rows());
    auto [l, r] = model.loss(s, out);
    (void)l;
    rep.mel += r.mel;
    rep.pitch += r.pitch;
    rep.energy += r.energy;
    rep.emo += r.emo;
    rep.total += r.total;
  }
  const double n = double(samples.size());
  rep.mel /= n;
  rep.pitch /= n;
  rep.energy /= n;
  rep.emo /= n;
  rep.total /= n;
  return rep;
}

}  // namespace hpm

#endif  // HPM_TRAIN_HPP
