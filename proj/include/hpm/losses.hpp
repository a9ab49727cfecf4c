#ifndef HPM_LOSSES_HPP
#define HPM_LOSSES_HPP

#include "hpm/graph.hpp"

namespace hpm {

struct LossReport {
  double mel = 0.0;
  double pitch = 0.0;
  double energy = 0.0;
  double emo = 0.0;
  double total = 0.0;
  int step = 0;
};

struct LossWeights {
  double mel = 1.0, pitch = 1.0, energy = 1.0, emo = 1.0;
};

// ---- plain scalar versions (metric reporting, oracles live in tests) ------

inline double loss_mse(const RVec& pred, const RVec& target) {
  if (pred.size() != target.size()) throw ShapeError("loss: length mismatch");
  return (pred - target).squaredNorm() / double(pred.size());
}

inline double loss_pitch(const RVec& pred, const RVec& target) {
  return loss_mse(pred, target);
}

inline double loss_energy(const RVec& pred, const RVec& target) {
  return loss_mse(pred, target);
}

// mean over frames of the per-frame L1 norm
inline double loss_mel(const RMat& pred, const RMat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("loss_mel: shape mismatch");
  return (pred - target).cwiseAbs().rowwise().sum().mean();
}

inline double loss_emotion(const RVec& probs, int label) {
  if (label < 0 || label >= probs.size())
    throw InvalidLabel("loss_emotion: label out of range");
  return -std::log(std::max(probs(label), 1e-300));
}

inline LossReport total_loss(double mel, double pitch, double energy, double emo,
                             const LossWeights& w = {}) {
  LossReport r;
  r.mel = mel;
  r.pitch = pitch;
  r.energy = energy;
  r.emo = emo;
  r.total = w.mel * mel + w.pitch * pitch + w.energy * energy + w.emo * emo;
  return r;
}

// ---- graph versions -------------------------------------------------------

namespace ag {

template <class S>
Var<S> graph_mse(const Var<S>& pred, const Mat<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("graph_mse: shape mismatch");
  auto d = sub(pred, constant<S>(target));
  return mean_all(cmul(d, d));
}

template <class S>
Var<S> graph_mel_l1(const Var<S>& pred, const Mat<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw ShapeError("graph_mel_l1: shape mismatch");
  auto d = abs_(sub(pred, constant<S>(target)));
  return scale(sum_all(d), S(1) / S(pred.rows()));
}

}  // namespace ag

}  // namespace hpm

#endif  // HPM_LOSSES_HPP
