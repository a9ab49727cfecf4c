#ifndef HPM_METRICS_HPP
#define HPM_METRICS_HPP

#include "hpm/layers.hpp"
#include "hpm/train.hpp"

#include <functional>

namespace hpm::metrics {

// K mel-cepstral coefficients per frame, c0 (frame energy) excluded
constexpr int kCepstralOrder = 13;

// (10 / ln 10) * sqrt(2): Kubichek's constant relating a log-spectral cepstral
// distance to decibels
inline double mcd_constant() { return 10.0 / std::log(10.0) * std::sqrt(2.0); }

// DCT-II over the log-mel bins of each frame, keeping coefficients 1..13.
// Input frames are dB; they are rescaled to natural log magnitude first so the
// decibel constant above applies.
inline RMat to_cepstra(const RMat& mel_db, int order = kCepstralOrder) {
  if (mel_db.rows() == 0 || mel_db.cols() == 0)
    throw EmptyInput("to_cepstra: empty mel");
  if (!mel_db.allFinite()) throw InvalidFeature("to_cepstra: non-finite mel");
  const Eigen::Index T = mel_db.rows(), N = mel_db.cols();
  const double db_to_ln = std::log(10.0) / 20.0;
  RMat c(T, order);
  for (Eigen::Index t = 0; t < T; ++t)
    for (int k = 1; k <= order; ++k) {
      double acc = 0.0;
      for (Eigen::Index n = 0; n < N; ++n)
        acc += mel_db(t, n) * db_to_ln *
               std::cos(M_PI * k * (double(n) + 0.5) / double(N));
      c(t, k - 1) = acc;
    }
  return c;
}

// frame-wise MCD; lengths must match (use mcd_dtw for unequal lengths)
inline double mcd(const RMat& a, const RMat& b) {
  if (a.rows() == 0 || b.rows() == 0) throw EmptyInput("mcd: empty input");
  if (a.rows() != b.rows())
    throw ShapeError("mcd: length mismatch — use mcd_dtw for unequal lengths");
  if (a.cols() != b.cols()) throw ShapeError("mcd: coefficient count mismatch");
  double acc = 0.0;
  for (Eigen::Index t = 0; t < a.rows(); ++t)
    acc += (a.row(t) - b.row(t)).norm();
  return mcd_constant() * acc / double(a.rows());
}

struct DtwResult {
  double value = 0.0;  // path-mean cost
  double total = 0.0;  // summed cost along the optimal path
  std::vector<std::pair<int, int>> path;
};

namespace detail {

// consecutive bit-identical frames carry no information for a path-mean
// distance; collapsing them makes the metric invariant under frame duplication
inline RMat collapse_runs(const RMat& x) {
  std::vector<Eigen::Index> keep;
  for (Eigen::Index t = 0; t < x.rows(); ++t)
    if (t == 0 || x.row(t) != x.row(t - 1)) keep.push_back(t);
  RMat out(Eigen::Index(keep.size()), x.cols());
  for (size_t i = 0; i < keep.size(); ++i) out.row(Eigen::Index(i)) = x.row(keep[i]);
  return out;
}

}  // namespace detail

// boundary-anchored DTW over the per-frame MCD cost, steps {(1,0),(0,1),(1,1)}
inline DtwResult mcd_dtw(const RMat& a_in, const RMat& b_in) {
  if (a_in.rows() == 0 || b_in.rows() == 0)
    throw EmptyInput("mcd_dtw: empty input");
  if (a_in.cols() != b_in.cols())
    throw ShapeError("mcd_dtw: coefficient count mismatch");
  const RMat a = detail::collapse_runs(a_in);
  const RMat b = detail::collapse_runs(b_in);
  const Eigen::Index Ta = a.rows(), Tb = b.rows();
  RMat cost(Ta, Tb);
  for (Eigen::Index i = 0; i < Ta; ++i)
    for (Eigen::Index j = 0; j < Tb; ++j)
      cost(i, j) = mcd_constant() * (a.row(i) - b.row(j)).norm();

  RMat acc = RMat::Constant(Ta, Tb, std::numeric_limits<double>::infinity());
  Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic> from(Ta, Tb);
  acc(0, 0) = cost(0, 0);
  from(0, 0) = 0;
  for (Eigen::Index i = 0; i < Ta; ++i)
    for (Eigen::Index j = 0; j < Tb; ++j) {
      if (i == 0 && j == 0) continue;
      double best = std::numeric_limits<double>::infinity();
      std::int8_t dir = 0;
      if (i > 0 && j > 0 && acc(i - 1, j - 1) < best) {
        best = acc(i - 1, j - 1);
        dir = 3;  // diagonal
      }
      if (i > 0 && acc(i - 1, j) < best) {
        best = acc(i - 1, j);
        dir = 1;  // advance a
      }
      if (j > 0 && acc(i, j - 1) < best) {
        best = acc(i, j - 1);
        dir = 2;  // advance b
      }
      acc(i, j) = best + cost(i, j);
      from(i, j) = dir;
    }

  DtwResult r;
  r.total = acc(Ta - 1, Tb - 1);
  Eigen::Index i = Ta - 1, j = Tb - 1;
  while (true) {
    r.path.push_back({int(i), int(j)});
    if (i == 0 && j == 0) break;
    const std::int8_t dir = from(i, j);
    if (dir == 3) { --i; --j; }
    else if (dir == 1) --i;
    else --j;
  }
  std::reverse(r.path.begin(), r.path.end());
  r.value = r.total / double(r.path.size());
  return r;
}

// length-penalty coefficient: max/min of the original (uncollapsed) lengths
using LengthCoefficient = std::function<double(Eigen::Index, Eigen::Index)>;

inline double default_length_coefficient(Eigen::Index ta, Eigen::Index tb) {
  return double(std::max(ta, tb)) / double(std::min(ta, tb));
}

inline double mcd_dtw_sl(const RMat& a, const RMat& b,
                         const LengthCoefficient& coeff = default_length_coefficient) {
  return coeff(a.rows(), b.rows()) * mcd_dtw(a, b).value;
}

struct MetricReport {
  double mcd = 0.0;
  double mcd_dtw = 0.0;
  double mcd_dtw_sl = 0.0;
  int path_len = 0;
  double len_ratio = 1.0;
};

// full MCD-family report for one generated/reference mel pair (dB frames);
// frame-wise mcd is only defined at equal lengths and reported as NaN otherwise
inline MetricReport score_pair(const RMat& gen_mel_db, const RMat& ref_mel_db) {
  const RMat ca = to_cepstra(gen_mel_db);
  const RMat cb = to_cepstra(ref_mel_db);
  MetricReport rep;
  rep.mcd = (ca.rows() == cb.rows()) ? mcd(ca, cb)
                                     : std::numeric_limits<double>::quiet_NaN();
  const DtwResult d = mcd_dtw(ca, cb);
  rep.mcd_dtw = d.value;
  rep.path_len = int(d.path.size());
  rep.len_ratio = default_length_coefficient(ca.rows(), cb.rows());
  rep.mcd_dtw_sl = rep.len_ratio * d.value;
  return rep;
}

// ---- desk-scale emotion / identity accuracy --------------------------------

// Tiny trainable classifier over mel frames: per-frame linear lift, one
// temporal convolution, masked mean pooling, linear head.
template <class S>
struct MelClassifier {
  nn::ParamStore<S> params;
  nn::Linear<S> lift;
  nn::Conv1d<S> conv;
  nn::Linear<S> head;
  int hidden = 32, classes = 8;
  RVec mean = RVec::Zero(80), stdev = RVec::Ones(80);

  MelClassifier(int classes_, int hidden_, std::uint64_t seed)
      : hidden(hidden_), classes(classes_) {
    Rng rng(seed);
    lift = nn::Linear<S>(params, "clf.lift", rng, 80, hidden);
    conv = nn::Conv1d<S>(params, "clf.conv", rng, hidden, hidden, 3);
    head = nn::Linear<S>(params, "clf.head", rng, hidden, classes);
  }

  ag::Var<S> logits(const RMat& mel_db) {
    RMat norm = mel_db;
    for (Eigen::Index j = 0; j < norm.cols(); ++j)
      norm.col(j) = (norm.col(j).array() - mean(j)) / stdev(j);
    auto h = ag::relu(lift(ag::constant<S>(norm.template cast<S>())));
    h = ag::relu(conv(h));
    Mat<S> pool = Mat<S>::Constant(1, h.rows(), S(1) / S(h.rows()));
    auto pooled = ag::matmul(ag::constant<S>(std::move(pool)), h);
    return head(pooled);  // 1 x classes
  }

  int predict(const RMat& mel_db) {
    Eigen::Index arg = 0;
    logits(mel_db).value().row(0).maxCoeff(&arg);
    return int(arg);
  }
};

struct LabeledMel {
  RMat mel_db;
  int label = 0;
};

template <class S>
void train_classifier(MelClassifier<S>& clf, const std::vector<LabeledMel>& set,
                      int steps, double lr, std::uint64_t seed) {
  if (set.empty()) throw EmptyInput("train_classifier: empty set");
  // global frame statistics from the training set
  RVec sum = RVec::Zero(80), sq = RVec::Zero(80);
  int64_t n = 0;
  for (const auto& ex : set) {
    for (Eigen::Index t = 0; t < ex.mel_db.rows(); ++t) {
      sum += ex.mel_db.row(t).transpose();
      sq += ex.mel_db.row(t).transpose().cwiseAbs2();
    }
    n += ex.mel_db.rows();
  }
  clf.mean = sum / double(n);
  clf.stdev = ((sq / double(n) - clf.mean.cwiseAbs2()).cwiseMax(1e-12)).cwiseSqrt();

  Adam<S> opt(clf.params, lr, 1.0);
  Rng rng(seed);
  const int batch = 8;
  for (int step = 0; step < steps; ++step) {
    clf.params.zero_grads();
    ag::Var<S> loss;
    for (int b = 0; b < batch; ++b) {
      const auto& ex = set[size_t(rng.uniform_int(0, int(set.size()) - 1))];
      auto l = ag::cross_entropy_logits(clf.logits(ex.mel_db), ex.label);
      loss = loss.valid() ? ag::add(loss, l) : l;
    }
    loss = ag::scale(loss, S(1) / S(batch));
    ag::backward(loss);
    opt.step();
  }
}

template <class S>
double accuracy(MelClassifier<S>& clf, const std::vector<LabeledMel>& set) {
  if (set.empty()) throw EmptyInput("accuracy: empty set");
  int hits = 0;
  for (const auto& ex : set) hits += (clf.predict(ex.mel_db) == ex.label);
  return double(hits) / double(set.size());
}

// ---- classifier checkpointing ---------------------------------------------

template <class S>
void save_classifier(const MelClassifier<S>& clf,
                     const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("classifier: cannot write " + path.string());
  const char magic[8] = {'H', 'P', 'M', 'C', 'L', 'F', '0', '1'};
  out.write(magic, 8);
  auto w64 = [&](std::uint64_t v) { out.write(reinterpret_cast<char*>(&v), 8); };
  auto wf = [&](double v) { out.write(reinterpret_cast<char*>(&v), 8); };
  w64(std::uint64_t(clf.classes));
  w64(std::uint64_t(clf.hidden));
  for (Eigen::Index i = 0; i < 80; ++i) wf(clf.mean(i));
  for (Eigen::Index i = 0; i < 80; ++i) wf(clf.stdev(i));
  auto& ps = const_cast<nn::ParamStore<S>&>(clf.params);
  w64(ps.size());
  for (size_t i = 0; i < ps.size(); ++i) {
    const auto& v = ps.at(i).value();
    w64(std::uint64_t(v.rows()));
    w64(std::uint64_t(v.cols()));
    for (Eigen::Index c = 0; c < v.cols(); ++c)
      for (Eigen::Index r = 0; r < v.rows(); ++r) wf(double(v(r, c)));
  }
}

template <class S>
MelClassifier<S> load_classifier(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingModel("classifier: cannot read " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != "HPMCLF01")
    throw IoError("classifier: bad magic in " + path.string());
  auto r64 = [&]() {
    std::uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  auto rf = [&]() {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    return v;
  };
  const int classes = int(r64());
  const int hidden = int(r64());
  MelClassifier<S> clf(classes, hidden, /*seed=*/0);
  for (Eigen::Index i = 0; i < 80; ++i) clf.mean(i) = rf();
  for (Eigen::Index i = 0; i < 80; ++i) clf.stdev(i) = rf();
  const std::uint64_t n = r64();
  if (n != clf.params.size())
    throw IoError("classifier: parameter count mismatch");
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto rows = Eigen::Index(r64());
    const auto cols = Eigen::Index(r64());
    auto& v = clf.params.at(size_t(i)).value();
    if (v.rows() != rows || v.cols() != cols)
      throw IoError("classifier: shape mismatch");
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) v(r, c) = S(rf());
  }
  if (!in) throw IoError("classifier: truncated file " + path.string());
  return clf;
}

}  // namespace hpm::metrics

#endif  // HPM_METRICS_HPP
