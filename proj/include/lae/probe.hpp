// Utterance-level language probe: a 3-way linear classifier over the
// time-mean of h_bil. During joint training its gradient stops before the
// encoder; this header additionally fits a probe on a frozen model.
#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lae/corpus.hpp"
#include "lae/model.hpp"
#include "lae/tensor.hpp"

namespace lae {

template <typename Real>
TensorT<Real> probe_input_mean(Model<Real>& model, const TensorT<Real>& features) {
  Tape<Real> tape(/*recording=*/false);
  Pass<Real> pass{tape};
  const int feat = tape.leaf(features);
  auto enc = model.encode(pass, feat);
  const auto& h = tape.value(enc.h_bil);
  TensorT<Real> mean({1, h.cols()});
  for (int t = 0; t < h.rows(); ++t)
    for (int c = 0; c < h.cols(); ++c) mean.at(0, c) += h.at(t, c);
  for (int c = 0; c < h.cols(); ++c) mean.at(0, c) /= Real(h.rows());
  return mean;
}

template <typename Real>
int classify_probe(Model<Real>& model, const TensorT<Real>& features) {
  TensorT<Real> mean = probe_input_mean(model, features);
  const auto& w = model.param("probe.w").value;
  const auto& b = model.param("probe.b").value;
  int best = 0;
  Real best_score = 0;
  for (int k = 0; k < 3; ++k) {
    Real s = b.data[k];
    for (int d = 0; d < w.rows(); ++d) s += mean.at(0, d) * w.at(d, k);
    if (k == 0 || s > best_score) {
      best = k;
      best_score = s;
    }
  }
  return best;
}

// Full-batch softmax regression on precomputed inputs; Adam updates, fixed
// iteration count, deterministic. Returns final mean training loss.
template <typename Real>
double fit_linear_probe(const std::vector<TensorT<Real>>& inputs, const std::vector<int>& labels,
                        TensorT<Real>& w, TensorT<Real>& b, int iters = 300,
                        double lr = 5e-2) {
  if (inputs.empty() || inputs.size() != labels.size())
    throw DataError("fit_linear_probe: bad training set");
  const int D = inputs[0].cols();
  const int C = b.shape[0];
  TensorT<Real> mw = TensorT<Real>::zeros_like(w), vw = TensorT<Real>::zeros_like(w);
  TensorT<Real> mb = TensorT<Real>::zeros_like(b), vb = TensorT<Real>::zeros_like(b);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double loss = 0;
  for (int it = 1; it <= iters; ++it) {
    TensorT<Real> gw = TensorT<Real>::zeros_like(w);
    TensorT<Real> gb = TensorT<Real>::zeros_like(b);
    loss = 0;
    for (size_t ex = 0; ex < inputs.size(); ++ex) {
      const auto& x = inputs[ex];
      std::vector<double> z(C);
      for (int k = 0; k < C; ++k) {
        double s = b.data[k];
        for (int d = 0; d < D; ++d) s += double(x.at(0, d)) * double(w.at(d, k));
        z[k] = s;
      }
      double mx = z[0];
      for (int k = 1; k < C; ++k) mx = std::max(mx, z[k]);
      double sum = 0;
      for (int k = 0; k < C; ++k) sum += std::exp(z[k] - mx);
      loss += mx + std::log(sum) - z[labels[ex]];
      for (int k = 0; k < C; ++k) {
        const double p = std::exp(z[k] - mx) / sum - (k == labels[ex] ? 1.0 : 0.0);
        gb.data[k] += Real(p);
        for (int d = 0; d < D; ++d) gw.at(d, k) += Real(p * double(x.at(0, d)));
      }
    }
    const double inv = 1.0 / double(inputs.size());
    const double bc1 = 1.0 - std::pow(beta1, it), bc2 = 1.0 - std::pow(beta2, it);
    auto adam = [&](TensorT<Real>& p, TensorT<Real>& g, TensorT<Real>& m, TensorT<Real>& v) {
      for (size_t i = 0; i < p.data.size(); ++i) {
        const double gi = double(g.data[i]) * inv;
        m.data[i] = Real(beta1 * m.data[i] + (1 - beta1) * gi);
        v.data[i] = Real(beta2 * v.data[i] + (1 - beta2) * gi * gi);
        p.data[i] -= Real(lr * (m.data[i] / bc1) / (std::sqrt(v.data[i] / bc2) + eps));
      }
    };
    adam(w, gw, mw, vw);
    adam(b, gb, mb, vb);
    loss /= double(inputs.size());
  }
  return loss;
}

// Refits the model's probe head on a frozen encoder.
template <typename Real>
double train_probe(Model<Real>& model, const std::vector<Utterance>& utts, int iters = 300) {
  if (utts.empty()) throw DataError("train_probe: empty corpus");
  std::vector<TensorT<Real>> inputs;
  std::vector<int> labels;
  inputs.reserve(utts.size());
  for (const auto& u : utts) {
    TensorT<Real> feats({u.features.rows(), u.features.cols()});
    for (size_t i = 0; i < feats.data.size(); ++i) feats.data[i] = Real(u.features.data[i]);
    inputs.push_back(probe_input_mean(model, feats));
    labels.push_back(utterance_class(u.tags));
  }
  return fit_linear_probe(inputs, labels, model.param("probe.w").value,
                          model.param("probe.b").value, iters);
}

struct ProbeResult {
  std::map<std::string, double> accuracy_per_partition;
  std::map<std::string, int64_t> counts_per_partition;
};

inline ProbeResult evaluate_probe(Model<float>& model, const std::vector<Utterance>& utts) {
  ProbeResult r;
  std::map<std::string, int64_t> hits;
  for (const auto& u : utts) {
    const int pred = classify_probe(model, u.features);
    const int truth = utterance_class(u.tags);
    ++r.counts_per_partition[u.partition];
    if (pred == truth) ++hits[u.partition];
  }
  for (const auto& [part, n] : r.counts_per_partition)
    r.accuracy_per_partition[part] = n > 0 ? double(hits[part]) / double(n) : 0.0;
  return r;
}

}  // namespace lae
