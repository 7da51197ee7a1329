#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include "avse/corpus_io.hpp"
#include "avse/losses.hpp"
#include "avse/masking.hpp"
#include "avse/metrics.hpp"
#include "avse/mixer.hpp"
#include "avse/neural/network.hpp"
#include "avse/neural/train.hpp"
#include "avse/probe.hpp"
#include "avse/synth.hpp"
#include "avse/viseme.hpp"
#include "avse/wav.hpp"
#include "property.hpp"

namespace avse::testing {

namespace {

std::string str(double x) { return std::to_string(x); }

bool close(double a, double b, double rel, double abs_tol = 0.0) {
  return std::abs(a - b) <= std::max(abs_tol, rel * std::max(std::abs(a), std::abs(b)));
}

int rand_int(Rng& rng, int lo, int hi) { return lo + static_cast<int>(uniform_index(rng, static_cast<std::uint64_t>(hi - lo + 1))); }

PowerSpectrogram random_power(Rng& rng, int rows, int cols) {
  // Log-uniform magnitudes over many decades, with some exact zeros.
  RealMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = uniform01(rng) < 0.05 ? 0.0 : std::pow(10.0, uniform(rng, -6, 3));
  return {m};
}

Viseme random_viseme(Rng& rng) { return kAllVisemes[uniform_index(rng, kVisemeCount)]; }

std::string random_phoneme(Rng& rng) {
  const auto table = phoneme_table();
  return std::string(table[uniform_index(rng, table.size())].phoneme);
}

Alignment random_alignment(Rng& rng, double* total_ms) {
  Alignment a;
  double t = uniform(rng, 0.0, 30.0);
  const int n = rand_int(rng, 1, 12);
  for (int i = 0; i < n; ++i) {
    const double d = uniform01(rng) < 0.1 ? 0.0 : uniform(rng, 5.0, 120.0);
    a.push_back({t, t + d, random_phoneme(rng)});
    t += d + (uniform01(rng) < 0.3 ? uniform(rng, 0.0, 40.0) : 0.0);
  }
  *total_ms = t + 30.0;
  return a;
}

std::vector<SpeakerInfo> random_speakers(Rng& rng, int min_per_gender, int max_per_gender) {
  std::vector<SpeakerInfo> s;
  const int nf = rand_int(rng, min_per_gender, max_per_gender);
  const int nm = rand_int(rng, min_per_gender, max_per_gender);
  for (int i = 0; i < nf; ++i) s.push_back({"f" + std::to_string(rng() % 100000) + "_" + std::to_string(i), Gender::F});
  for (int i = 0; i < nm; ++i) s.push_back({"m" + std::to_string(rng() % 100000) + "_" + std::to_string(i), Gender::M});
  shuffle(s, rng);
  return s;
}

std::vector<Law> signal_laws() {
  std::vector<Law> laws;
  laws.push_back({"signal-core", "frame count follows floor((n-400)/160)+1", [](Rng& rng) {
                    const std::size_t n = static_cast<std::size_t>(rand_int(rng, 400, 4000));
                    const auto s = stft(random_waveform(rng, n));
                    expect(s.data.rows() == static_cast<Eigen::Index>((n - 400) / 160 + 1), "frames for n=" + std::to_string(n));
                    expect(s.data.cols() == 257, "bins");
                  }});
  laws.push_back({"signal-core", "round trip interior SNR >= 50 dB", [](Rng& rng) {
                    const std::size_t n = static_cast<std::size_t>(rand_int(rng, 1200, 4000));
                    const Waveform w = random_waveform(rng, n, uniform(rng, 0.01, 10.0));
                    const Waveform r = istft(stft(w));
                    double sig = 0, err = 0;
                    for (std::size_t i = 400; i + 400 < r.size(); ++i) {
                      sig += w.samples[i] * w.samples[i];
                      err += (w.samples[i] - r.samples[i]) * (w.samples[i] - r.samples[i]);
                    }
                    expect(10 * std::log10(sig / std::max(err, 1e-300)) >= 50.0, "round trip SNR");
                  }});
  laws.push_back({"signal-core", "stft is linear", [](Rng& rng) {
                    const std::size_t n = static_cast<std::size_t>(rand_int(rng, 400, 2000));
                    const Waveform x = random_waveform(rng, n), y = random_waveform(rng, n);
                    const double a = uniform(rng, -3, 3), b = uniform(rng, -3, 3);
                    Waveform z{std::vector<double>(n), kSampleRate};
                    for (std::size_t i = 0; i < n; ++i) z.samples[i] = a * x.samples[i] + b * y.samples[i];
                    const auto lhs = stft(z).data;
                    const auto rhs = (a * stft(x).data + b * stft(y).data).eval();
                    expect((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9 * (1.0 + rhs.cwiseAbs().maxCoeff()), "linearity");
                  }});
  laws.push_back({"signal-core", "power spectrum is |X|^2 and nonnegative", [](Rng& rng) {
                    ComplexSpectrogram s;
                    s.data.resize(rand_int(rng, 1, 6), 257);
                    for (Eigen::Index i = 0; i < s.data.size(); ++i) s.data(i) = {gaussian(rng), gaussian(rng)};
                    const auto p = power_spectrum(s).data;
                    for (Eigen::Index i = 0; i < p.size(); ++i) {
                      expect(p(i) >= 0.0, "negative power");
                      expect(close(p(i), std::norm(s.data(i)), 1e-12, 1e-300), "power value");
                    }
                  }});
  laws.push_back({"signal-core", "power spectrum ignores a global phase rotation", [](Rng& rng) {
                    ComplexSpectrogram s;
                    s.data.resize(rand_int(rng, 1, 4), 257);
                    for (Eigen::Index i = 0; i < s.data.size(); ++i) s.data(i) = {gaussian(rng), gaussian(rng)};
                    ComplexSpectrogram r = s;
                    r.data *= std::polar(1.0, uniform(rng, 0.0, 6.283185307179586));
                    const auto a = power_spectrum(s).data, b = power_spectrum(r).data;
                    expect((a - b).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + a.maxCoeff()), "phase invariance");
                  }});
  return laws;
}

std::vector<Law> masking_laws() {
  std::vector<Law> laws;
  laws.push_back({"masking", "IRM lies in [0,1]", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 8), c = rand_int(rng, 1, 40);
                    const auto m = ideal_ratio_mask(random_power(rng, r, c), random_power(rng, r, c)).data;
                    expect(m.minCoeff() >= 0.0 && m.maxCoeff() <= 1.0, "range");
                  }});
  laws.push_back({"masking", "IRM is invariant to a common power scale", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 8), c = rand_int(rng, 1, 40);
                    PowerSpectrogram s = random_power(rng, r, c), n = random_power(rng, r, c);
                    // Keep entries well above the epsilon so the scale cannot be felt.
                    s.data = s.data.array() + 1e-3;
                    n.data = n.data.array() + 1e-3;
                    const double k = std::pow(10.0, uniform(rng, 0, 4));
                    const auto m1 = ideal_ratio_mask(s, n).data;
                    const auto m2 = ideal_ratio_mask({s.data * k}, {n.data * k}).data;
                    expect((m1 - m2).cwiseAbs().maxCoeff() <= 1e-8, "scale invariance");
                  }});
  laws.push_back({"masking", "IRM complements when speech and noise swap", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 8), c = rand_int(rng, 1, 40);
                    PowerSpectrogram s = random_power(rng, r, c), n = random_power(rng, r, c);
                    s.data = s.data.array() + 1e-3;
                    n.data = n.data.array() + 1e-3;
                    const auto sum = (ideal_ratio_mask(s, n).data + ideal_ratio_mask(n, s).data).eval();
                    expect((sum.array() - 1.0).abs().maxCoeff() <= 1e-8, "complement");
                  }});
  laws.push_back({"masking", "raising speech power never lowers the mask", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 6), c = rand_int(rng, 1, 30);
                    const PowerSpectrogram s = random_power(rng, r, c), n = random_power(rng, r, c);
                    PowerSpectrogram s2 = s;
                    for (Eigen::Index i = 0; i < s2.data.size(); ++i) s2.data(i) += uniform01(rng) < 0.5 ? 0.0 : std::pow(10.0, uniform(rng, -6, 3));
                    const auto m1 = ideal_ratio_mask(s, n).data, m2 = ideal_ratio_mask(s2, n).data;
                    expect((m2.array() >= m1.array() - 1e-15).all(), "monotonicity");
                  }});
  laws.push_back({"masking", "clamp is within [0,1] and idempotent", [](Rng& rng) {
                    const auto raw = random_matrix(rng, rand_int(rng, 1, 6), rand_int(rng, 1, 30), -3.0, 4.0);
                    const auto once = clamp_mask(raw).data;
                    const auto twice = clamp_mask(once).data;
                    expect(once.minCoeff() >= 0.0 && once.maxCoeff() <= 1.0, "range");
                    expect(once == twice, "idempotent");
                  }});
  laws.push_back({"masking", "masked power never exceeds mixture power", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 6), c = rand_int(rng, 1, 30);
                    const auto y = random_power(rng, r, c);
                    const RatioMask m{random_matrix(rng, r, c, 0.0, 1.0)};
                    const auto e = apply_mask(m, y).data;
                    expect((e.array() <= y.data.array()).all() && e.minCoeff() >= 0.0, "bounded by mixture");
                  }});
  return laws;
}

std::vector<Law> loss_laws() {
  std::vector<Law> laws;
  laws.push_back({"losses", "losses vanish at pred == target and are nonnegative", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 6), c = rand_int(rng, 1, 30);
                    const auto t = random_matrix(rng, r, c, 0.0, 1.0);
                    const auto p = random_matrix(rng, r, c, -0.5, 1.5);
                    // The cosine term leaves eps / |t|^2 per frame at identity.
                    double floor = 0.0;
                    for (int i = 0; i < r; ++i) floor = std::max(floor, kCosineEpsilon / t.row(i).squaredNorm());
                    for (const LossKind k : {LossKind::Mse, LossKind::Mae, LossKind::Hybrid}) {
                      expect(compute_loss(k, p, t).value >= 0.0, "negative loss");
                      const double tol = k == LossKind::Hybrid ? kDefaultAlpha * floor + 1e-12 : 1e-12;
                      expect(std::abs(compute_loss(k, t, t).value) <= tol, "nonzero at identity");
                    }
                  }});
  laws.push_back({"losses", "hybrid equals MAE plus alpha times cosine", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 6), c = rand_int(rng, 1, 30);
                    const auto t = random_matrix(rng, r, c, 0.0, 1.0);
                    const auto p = random_matrix(rng, r, c, -0.5, 1.5);
                    const double alpha = uniform(rng, 0.0, 2.0);
                    const double h = hybrid_loss(p, t, alpha).value;
                    const double ref = mae_loss(p, t).value + alpha * cosine_loss(p, t).value;
                    expect(close(h, ref, 1e-12, 1e-15), "hybrid identity");
                    expect(hybrid_loss(p, t, 0.0).value == mae_loss(p, t).value, "alpha = 0");
                  }});
  laws.push_back({"losses", "cosine loss is invariant to positive per-frame scaling", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 6), c = rand_int(rng, 2, 30);
                    const auto t = random_matrix(rng, r, c, 0.05, 1.0);
                    auto p = random_matrix(rng, r, c, 0.05, 1.0);
                    RealMatrix q = p;
                    double tol = 1e-12;
                    for (int i = 0; i < r; ++i) {
                      const double k = uniform(rng, 0.1, 10.0);
                      q.row(i) *= k;
                      tol += 2 * kCosineEpsilon / (std::min(k, 1.0) * p.row(i).norm() * t.row(i).norm()) / r;
                    }
                    expect(std::abs(cosine_loss(p, t).value - cosine_loss(q, t).value) <= tol, "scale invariance");
                  }});
  laws.push_back({"losses", "hybrid loss is nondecreasing in alpha", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 6), c = rand_int(rng, 2, 30);
                    const auto t = random_matrix(rng, r, c, 0.0, 1.0);
                    const auto p = random_matrix(rng, r, c, -0.5, 1.5);
                    const double a1 = uniform(rng, 0.0, 2.0), a2 = uniform(rng, a1, 3.0);
                    expect(hybrid_loss(p, t, a1).value <= hybrid_loss(p, t, a2).value, "alpha monotonicity");
                  }});
  laws.push_back({"losses", "MAE obeys the triangle inequality", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 6), c = rand_int(rng, 1, 30);
                    const auto a = random_matrix(rng, r, c, 0, 1), b = random_matrix(rng, r, c, 0, 1),
                               d = random_matrix(rng, r, c, 0, 1);
                    expect(mae_loss(a, d).value <= mae_loss(a, b).value + mae_loss(b, d).value + 1e-12, "triangle");
                  }});
  laws.push_back({"losses", "MSE and cosine gradients match central differences", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 3), c = rand_int(rng, 2, 5);
                    const auto t = random_matrix(rng, r, c, 0.0, 1.0);
                    RealMatrix p = random_matrix(rng, r, c, 0.05, 1.0);
                    for (const LossKind k : {LossKind::Mse, LossKind::Hybrid}) {
                      // Keep MAE kinks out of reach of the difference step.
                      for (Eigen::Index i = 0; i < p.size(); ++i)
                        if (std::abs(p(i) - t(i)) < 1e-3) p(i) = t(i) + 2e-3;
                      const auto g = compute_loss(k, p, t).gradient;
                      for (Eigen::Index i = 0; i < p.size(); ++i) {
                        const double h = 1e-6;
                        RealMatrix up = p, dn = p;
                        up(i) += h;
                        dn(i) -= h;
                        const double fd = (compute_loss(k, up, t).value - compute_loss(k, dn, t).value) / (2 * h);
                        expect(close(g(i), fd, 1e-5, 1e-8), std::string(to_string(k)) + " gradient " + str(g(i)) + " vs " + str(fd));
                      }
                    }
                  }});
  return laws;
}

std::vector<Law> metric_laws() {
  std::vector<Law> laws;
  laws.push_back({"metrics", "SNR of a scaled copy is -20 log10 |1 - c|", [](Rng& rng) {
                    const Waveform x = random_waveform(rng, static_cast<std::size_t>(rand_int(rng, 10, 500)));
                    double c = uniform(rng, -2.0, 2.0);
                    if (std::abs(1.0 - c) < 1e-3) c = 0.5;
                    Waveform y = x;
                    for (double& v : y.samples) v *= c;
                    expect(close(snr_db(x, y), -20.0 * std::log10(std::abs(1.0 - c)), 1e-9, 1e-9), "scaled SNR");
                    expect(snr_db(x, x) == kSnrCapDb, "cap at identity");
                  }});
  laws.push_back({"metrics", "SNR is invariant to joint scaling", [](Rng& rng) {
                    const std::size_t n = static_cast<std::size_t>(rand_int(rng, 10, 500));
                    const Waveform r = random_waveform(rng, n), e = random_waveform(rng, n);
                    const double k = std::pow(10.0, uniform(rng, -3, 3));
                    Waveform rk = r, ek = e;
                    for (double& v : rk.samples) v *= k;
                    for (double& v : ek.samples) v *= k;
                    expect(close(snr_db(r, e), snr_db(rk, ek), 1e-9, 1e-9), "joint scaling");
                  }});
  laws.push_back({"metrics", "relative improvement is antisymmetric in sign", [](Rng& rng) {
                    const double a = uniform(rng, 1e-3, 1.0), b = uniform(rng, 1e-3, 1.0);
                    if (a == b) return;
                    expect((relative_improvement(a, b) > 0) == (relative_improvement(b, a) < 0), "antisymmetry");
                  }});
  laws.push_back({"metrics", "mask MAE is a symmetric metric", [](Rng& rng) {
                    const int r = rand_int(rng, 1, 6), c = rand_int(rng, 1, 30);
                    const auto a = random_matrix(rng, r, c, 0, 1), b = random_matrix(rng, r, c, 0, 1);
                    expect(mask_mae(a, b) == mask_mae(b, a), "symmetry");
                    expect(mask_mae(a, a) == 0.0, "identity");
                  }});
  laws.push_back({"metrics", "relative improvement sign follows the MAE change", [](Rng& rng) {
                    const double a = uniform(rng, 1e-3, 1.0), b = uniform(rng, 0.0, 1.0);
                    const double d = relative_improvement(a, b);
                    expect((d > 0) == (b < a) && close(d, 100.0 * (a - b) / a, 1e-12, 1e-12), "relative change");
                  }});
  return laws;
}

std::vector<Law> mixer_laws() {
  std::vector<Law> laws;
  laws.push_back({"mixer", "mixture hits the requested SNR", [](Rng& rng) {
                    const Waveform t = random_waveform(rng, static_cast<std::size_t>(rand_int(rng, 50, 3000)), uniform(rng, 0.01, 2));
                    const Waveform n = random_waveform(rng, static_cast<std::size_t>(rand_int(rng, 20, 3000)), uniform(rng, 0.01, 2));
                    const double snr = uniform(rng, -10, 10);
                    const MixResult m = mix_at_snr(t, n, snr);
                    expect(m.mixture.size() == t.size(), "length");
                    const double got = 10 * std::log10(mean_power(t) / mean_power(m.scaled_noise));
                    expect(std::abs(got - snr) <= 1e-9, "SNR " + str(got) + " vs " + str(snr));
                    for (std::size_t i = 0; i < t.size(); ++i)
                      expect(close(m.mixture.samples[i], t.samples[i] + m.scaled_noise.samples[i], 1e-12, 1e-15), "sum");
                  }});
  laws.push_back({"mixer", "speaker split is disjoint, complete, 80/10/10 per gender and seeded", [](Rng& rng) {
                    const auto speakers = random_speakers(rng, 10, 60);
                    SplitSpec spec;
                    spec.seed = rng();
                    const auto a = split_speakers(speakers, spec);
                    const auto b = split_speakers(speakers, spec);
                    expect(a.train == b.train && a.val == b.val && a.test == b.test, "determinism");
                    std::set<std::string> seen;
                    for (const auto* part : {&a.train, &a.val, &a.test})
                      for (const auto& id : *part) expect(seen.insert(id).second, "speaker in two partitions");
                    expect(seen.size() == speakers.size(), "coverage");
                    for (const Gender g : {Gender::F, Gender::M}) {
                      std::size_t n = 0;
                      std::array<std::size_t, 3> got{};
                      for (const auto& s : speakers) {
                        if (s.gender != g) continue;
                        ++n;
                        ++got[static_cast<std::size_t>(a.partition_of(s.id))];
                      }
                      expect(got == partition_counts(n, spec.ratios), "per-gender counts");
                      expect(std::abs(static_cast<double>(got[0]) - 0.8 * n) < 1.0, "train share");
                    }
                  }});
  laws.push_back({"mixer", "interferers come from another speaker of the same partition", [](Rng& rng) {
                    std::vector<ManifestEntry> entries;
                    const int n_spk = rand_int(rng, 2, 8);
                    for (int s = 0; s < n_spk; ++s) {
                      const int n_utt = rand_int(rng, 1, 4);
                      for (int u = 0; u < n_utt; ++u) {
                        ManifestEntry e;
                        e.id = "s" + std::to_string(s) + "u" + std::to_string(u);
                        e.speaker_id = "s" + std::to_string(s);
                        e.partition = s % 2 ? Partition::Test : Partition::Train;
                        entries.push_back(e);
                      }
                    }
                    shuffle(entries, rng);
                    std::map<std::string, const ManifestEntry*> by_id;
                    for (const auto& e : entries) by_id[e.id] = &e;
                    for (const Partition p : {Partition::Train, Partition::Test}) {
                      std::set<std::string> spk;
                      for (const auto& e : entries) if (e.partition == p) spk.insert(e.speaker_id);
                      if (spk.size() < 2) continue;
                      const std::uint64_t seed = rng();
                      const auto pairs = pair_interferers(entries, p, seed);
                      expect(pairs.size() == static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                 [p](const auto& e) { return e.partition == p; })), "one pair per utterance");
                      for (const auto& pr : pairs) {
                        const auto* t = by_id.at(pr.target_id);
                        const auto* i = by_id.at(pr.interferer_id);
                        expect(t->speaker_id != i->speaker_id, "same speaker");
                        expect(i->partition == p, "cross-partition interferer");
                      }
                      expect(pair_interferers(entries, p, seed).size() == pairs.size(), "determinism");
                    }
                  }});
  laws.push_back({"mixer", "segment frames sit inside their segment", [](Rng& rng) {
                    const std::size_t n = static_cast<std::size_t>(rand_int(rng, 0, 200000));
                    const int k = segment_count(n);
                    expect(static_cast<std::size_t>(k) * kSegmentSamples <= n && n < static_cast<std::size_t>(k + 1) * kSegmentSamples,
                           "segment count");
                    const int seg = rand_int(rng, 0, 50);
                    const auto c = segment_frame_centers_ms(seg);
                    // 25 ms windows on a 10 ms hop from the segment start.
                    for (int i = 0; i < kSegmentFrames; ++i)
                      expect(close(c[static_cast<std::size_t>(i)], seg * 200.0 + 10.0 * i + 12.5, 1e-12), "frame centres");
                    expect(c.front() >= seg * 200.0 && c.back() < (seg + 1) * 200.0 + 12.5, "segment bounds");
                  }});
  return laws;
}

std::vector<Law> viseme_laws() {
  std::vector<Law> laws;
  laws.push_back({"viseme-analysis", "frame labels match a brute-force interval scan", [](Rng& rng) {
                    double total = 0;
                    const Alignment a = random_alignment(rng, &total);
                    std::vector<double> times;
                    const int n = rand_int(rng, 1, 60);
                    for (int i = 0; i < n; ++i) {
                      // Include exact interval edges.
                      if (uniform01(rng) < 0.3) {
                        const auto& iv = a[uniform_index(rng, a.size())];
                        times.push_back(uniform01(rng) < 0.5 ? iv.start_ms : iv.end_ms);
                      } else {
                        times.push_back(uniform(rng, -10.0, total));
                      }
                    }
                    const auto got = label_frames(a, times);
                    for (std::size_t i = 0; i < times.size(); ++i) {
                      Viseme ref = Viseme::SIL;
                      for (const auto& iv : a)
                        if (!(times[i] < iv.start_ms) && times[i] < iv.end_ms) {
                          ref = phoneme_to_viseme(iv.phoneme);
                          break;
                        }
                      expect(got[i] == ref, "label at t=" + str(times[i]));
                    }
                  }});
  laws.push_back({"viseme-analysis", "frame-weighted per-viseme MAE averages to the overall MAE", [](Rng& rng) {
                    const int segs = rand_int(rng, 1, 4), frames = rand_int(rng, 1, 6), bins = rand_int(rng, 1, 12);
                    std::vector<RealMatrix> p, t;
                    std::vector<std::vector<Viseme>> labels;
                    double total = 0;
                    for (int s = 0; s < segs; ++s) {
                      p.push_back(random_matrix(rng, frames, bins, 0, 1));
                      t.push_back(random_matrix(rng, frames, bins, 0, 1));
                      total += (p.back() - t.back()).cwiseAbs().sum();
                      std::vector<Viseme> l;
                      for (int f = 0; f < frames; ++f) l.push_back(random_viseme(rng));
                      labels.push_back(l);
                    }
                    const auto per = per_viseme_mae(p, t, labels);
                    double weighted = 0;
                    std::size_t n = 0;
                    for (const auto& [v, m] : per) {
                      weighted += m.mae * static_cast<double>(m.frames);
                      n += m.frames;
                    }
                    expect(n == static_cast<std::size_t>(segs * frames), "frame total");
                    expect(close(weighted / static_cast<double>(n), total / (segs * frames * bins), 1e-12, 1e-14), "weighted mean");
                  }});
  laws.push_back({"viseme-analysis", "phoneme lookup ignores case and slashes", [](Rng& rng) {
                    std::string p = random_phoneme(rng);
                    const Viseme v = phoneme_to_viseme(p);
                    for (char& ch : p)
                      if (uniform01(rng) < 0.5) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
                    expect(phoneme_to_viseme(p) == v && phoneme_to_viseme("/" + p + "/") == v, "normalisation");
                  }});
  return laws;
}

std::vector<Law> neural_laws() {
  std::vector<Law> laws;
  laws.push_back({"neural", "scaled widths are floored and monotone in scale", [](Rng& rng) {
                    nn::ModelConfig a, b;
                    a.scale_factor = uniform(rng, 0.01, 1.0);
                    b.scale_factor = uniform(rng, a.scale_factor, 1.0);
                    const int w = rand_int(rng, 1, 2048);
                    expect(a.scaled(w) >= nn::kMinScaledWidth, "floor");
                    expect(a.scaled(w) <= b.scaled(w), "monotone");
                  }});
  laws.push_back({"neural", "dense layer gradients match central differences", [](Rng& rng) {
                    const int in = rand_int(rng, 1, 5), out = rand_int(rng, 1, 5), batch = rand_int(rng, 1, 3);
                    const bool relu = uniform01(rng) < 0.5;
                    nn::Matrix w = nn::Matrix::Random(out, in), x = nn::Matrix::Random(in, batch);
                    nn::Vector b = nn::Vector::Random(out);
                    for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = uniform(rng, -1, 1);
                    for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = uniform(rng, -1, 1);
                    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = uniform(rng, -1, 1);
                    const nn::Matrix up = random_matrix(rng, out, batch, -1, 1);
                    auto f = [&](const nn::Matrix& ww, const nn::Vector& bb, const nn::Matrix& xx) {
                      nn::DenseCache c;
                      const nn::ConstMatrixMap wm(ww.data(), ww.rows(), ww.cols());
                      return (nn::dense_forward(wm, bb.data(), xx, relu, &c).array() * up.array()).sum();
                    };
                    nn::DenseCache cache;
                    const nn::ConstMatrixMap wm(w.data(), out, in);
                    nn::dense_forward(wm, b.data(), x, relu, &cache);
                    nn::Matrix dw = nn::Matrix::Zero(out, in);
                    nn::Vector db = nn::Vector::Zero(out);
                    nn::MatrixMap dwm(dw.data(), out, in);
                    const nn::Matrix dx = nn::dense_backward(wm, dwm, db.data(), cache, up, relu);
                    // A pre-activation within reach of the step makes ReLU's difference meaningless.
                    if (relu && ((w * x).colwise() + b).cwiseAbs().minCoeff() < 1e-4) return;
                    const double h = 1e-6;
                    for (Eigen::Index i = 0; i < w.size(); ++i) {
                      nn::Matrix wp = w, wn = w;
                      wp(i) += h;
                      wn(i) -= h;
                      const double fd = (f(wp, b, x) - f(wn, b, x)) / (2 * h);
                      expect(close(dw(i), fd, 1e-5, 1e-7), "dW");
                    }
                    for (Eigen::Index i = 0; i < x.size(); ++i) {
                      nn::Matrix xp = x, xn = x;
                      xp(i) += h;
                      xn(i) -= h;
                      expect(close(dx(i), (f(w, b, xp) - f(w, b, xn)) / (2 * h), 1e-5, 1e-7), "dX");
                    }
                  }});
  laws.push_back({"neural", "early stopping tracks the first minimum and stops after patience", [](Rng& rng) {
                    const int patience = rand_int(rng, 1, 5);
                    nn::EarlyStopper es(patience);
                    std::vector<double> losses;
                    const int n = rand_int(rng, 1, 30);
                    for (int i = 0; i < n; ++i) {
                      const double l = static_cast<double>(rand_int(rng, 0, 6));
                      losses.push_back(l);
                      es.update(l);
                      const auto best = std::min_element(losses.begin(), losses.end()) - losses.begin();
                      expect(es.best_epoch() == best, "best epoch");
                      expect(es.should_stop() == (static_cast<int>(losses.size()) - 1 - best >= patience), "stop rule");
                      if (es.should_stop()) break;
                    }
                  }});
  laws.push_back({"neural", "Adam leaves non-trainable entries alone", [](Rng& rng) {
                    nn::ModelParams p;
                    const int a = rand_int(rng, 1, 10), b = rand_int(rng, 1, 10);
                    p.layout.add("w", {a}, true);
                    p.layout.add("stat", {b}, false);
                    p.values.resize(static_cast<std::size_t>(a + b));
                    for (double& v : p.values) v = uniform(rng, -1, 1);
                    const auto before = p.values;
                    std::vector<double> g(p.values.size());
                    for (double& v : g) v = uniform(rng, -1, 1);
                    nn::AdamState st;
                    nn::adam_step(p, g, st, {});
                    for (int i = 0; i < b; ++i) expect(p.values[static_cast<std::size_t>(a + i)] == before[static_cast<std::size_t>(a + i)], "stat moved");
                    for (int i = 0; i < a; ++i) {
                      // The first bias-corrected step is lr * g / (|g| + eps).
                      const double gi = g[static_cast<std::size_t>(i)];
                      const double step = before[static_cast<std::size_t>(i)] - p.values[static_cast<std::size_t>(i)];
                      const nn::AdamConfig cfg;
                      expect(close(step, cfg.learning_rate * gi / (std::abs(gi) + cfg.epsilon), 1e-9, 1e-18), "first step size");
                    }
                  }});
  return laws;
}

std::vector<Law> probe_laws() {
  std::vector<Law> laws;
  laws.push_back({"probe", "majority label matches a brute-force count", [](Rng& rng) {
                    std::vector<Viseme> f(static_cast<std::size_t>(rand_int(rng, 1, 20)));
                    const int k = rand_int(rng, 1, 4);
                    for (auto& v : f) v = kAllVisemes[uniform_index(rng, static_cast<std::uint64_t>(k))];
                    int best_count = -1;
                    Viseme ref = Viseme::SIL;
                    for (std::size_t i = 0; i < f.size(); ++i) {
                      const int c = static_cast<int>(std::count(f.begin(), f.end(), f[i]));
                      if (c > best_count) {
                        best_count = c;
                        ref = f[i];
                      }
                    }
                    expect(majority_viseme(f) == ref, "majority");
                  }});
  laws.push_back({"probe", "probe split is speaker-disjoint, complete and seeded", [](Rng& rng) {
                    std::vector<ProbeExample> ex;
                    const int n_spk = rand_int(rng, 10, 40);
                    for (int s = 0; s < n_spk; ++s)
                      for (int k = rand_int(rng, 1, 5); k > 0; --k) ex.push_back({{uniform01(rng)}, random_viseme(rng), "p" + std::to_string(s)});
                    const std::uint64_t seed = rng();
                    const auto a = probe_split(ex, seed);
                    const auto b = probe_split(ex, seed);
                    expect(a.train.size() + a.val.size() + a.test.size() == ex.size(), "coverage");
                    auto ids = [](const std::vector<ProbeExample>& v) {
                      std::set<std::string> s;
                      for (const auto& e : v) s.insert(e.speaker_id);
                      return s;
                    };
                    const auto tr = ids(a.train), va = ids(a.val), te = ids(a.test);
                    for (const auto& id : va) expect(!tr.count(id) && !te.count(id), "val overlaps");
                    for (const auto& id : te) expect(!tr.count(id), "test overlaps");
                    expect(ids(b.train) == tr && ids(b.test) == te, "determinism");
                    const auto counts = partition_counts(static_cast<std::size_t>(n_spk), {0.8, 0.1, 0.1});
                    expect(tr.size() == counts[0] && va.size() == counts[1] && te.size() == counts[2], "80/10/10");
                  }});
  laws.push_back({"probe", "unweighted recall averages the per-class recalls", [](Rng& rng) {
                    const std::size_t n = static_cast<std::size_t>(rand_int(rng, 1, 80));
                    std::vector<Viseme> t(n), p(n);
                    for (std::size_t i = 0; i < n; ++i) {
                      t[i] = random_viseme(rng);
                      p[i] = uniform01(rng) < 0.5 ? t[i] : random_viseme(rng);
                    }
                    const auto r = recall_report(t, p);
                    double sum = 0;
                    int present = 0;
                    for (const auto& row : r.rows) {
                      const auto sup = static_cast<std::size_t>(std::count(t.begin(), t.end(), row.viseme));
                      expect(row.support == sup, "support");
                      if (sup) {
                        std::size_t ok = 0;
                        for (std::size_t i = 0; i < n; ++i) ok += t[i] == row.viseme && p[i] == row.viseme;
                        expect(close(row.recall_pct, 100.0 * ok / sup, 1e-12, 1e-12), "recall");
                        sum += row.recall_pct;
                        ++present;
                      }
                    }
                    expect(close(r.average_pct, sum / present, 1e-12, 1e-12), "average");
                    expect(recall_report(t, t).average_pct == 100.0, "perfect predictor");
                  }});
  laws.push_back({"probe", "logistic regression objective never increases and probabilities sum to one", [](Rng& rng) {
                    std::vector<ProbeExample> ex;
                    const int dim = rand_int(rng, 1, 4), n = rand_int(rng, 4, 30), k = rand_int(rng, 2, 4);
                    for (int i = 0; i < n; ++i) {
                      ProbeExample e;
                      e.viseme = kAllVisemes[static_cast<std::size_t>(i % k)];
                      for (int d = 0; d < dim; ++d) e.embedding.push_back(gaussian(rng) + (d == i % k ? 1.5 : 0.0));
                      e.speaker_id = "s";
                      ex.push_back(e);
                    }
                    LogRegTrace trace;
                    const auto m = logreg_train(ex, std::pow(10.0, uniform(rng, -2, 2)), {100, 1e-8}, &trace);
                    for (std::size_t i = 1; i < trace.size(); ++i) expect(trace[i] <= trace[i - 1], "objective rose");
                    const auto p = m.predict_proba(ex.front().embedding);
                    expect(std::abs(p.sum() - 1.0) <= 1e-12 && p.minCoeff() >= 0.0, "probabilities");
                  }});
  return laws;
}

std::vector<Law> synth_laws() {
  std::vector<Law> laws;
  laws.push_back({"synth-corpus", "utterances are deterministic with exact, contiguous alignments", [](Rng& rng) {
                    std::vector<std::string> ph;
                    for (int i = rand_int(rng, 1, 3); i > 0; --i) ph.push_back(random_phoneme(rng));
                    const std::uint64_t seed = rng();
                    const auto prof = make_speaker_profile(seed, "s", uniform01(rng) < 0.5 ? Gender::F : Gender::M);
                    const Utterance a = synth_utterance(ph, prof, seed), b = synth_utterance(ph, prof, seed);
                    expect(a.audio.samples == b.audio.samples && a.video.pixels == b.video.pixels, "determinism");
                    expect(a.alignment.size() == ph.size() && a.alignment.front().start_ms == 0.0, "alignment start");
                    for (std::size_t i = 1; i < a.alignment.size(); ++i)
                      expect(a.alignment[i].start_ms == a.alignment[i - 1].end_ms, "contiguous");
                    expect(a.audio.size() == static_cast<std::size_t>(a.alignment.back().end_ms * 16), "audio length");
                    expect(a.video.frame_count() == static_cast<int>(a.audio.size() * 60 / 16000), "video length");
                    validate(a);
                  }});
  laws.push_back({"synth-corpus", "speaker profiles stay in range and depend only on (seed, id)", [](Rng& rng) {
                    const std::uint64_t seed = rng();
                    const std::string id = "spk" + std::to_string(rng() % 1000);
                    const Gender g = uniform01(rng) < 0.5 ? Gender::F : Gender::M;
                    const auto p = make_speaker_profile(seed, id, g), q = make_speaker_profile(seed, id, g);
                    expect(p.f0_hz == q.f0_hz && p.mouth_scale == q.mouth_scale && p.formant_shift == q.formant_shift, "determinism");
                    expect(g == Gender::F ? (p.f0_hz >= 160 && p.f0_hz <= 250) : (p.f0_hz >= 90 && p.f0_hz <= 150), "f0");
                    expect(p.formant_shift >= 0.9 && p.formant_shift <= 1.1 && p.mouth_scale >= 0.85 && p.mouth_scale <= 1.15, "ranges");
                  }});
  return laws;
}

std::vector<Law> io_laws() {
  std::vector<Law> laws;
  laws.push_back({"signal-core", "WAV round trip is within half a quantisation step", [](Rng& rng) {
                    const auto dir = std::filesystem::temp_directory_path() / "avse_laws";
                    std::filesystem::create_directories(dir);
                    const auto path = dir / ("w" + std::to_string(rng() % 1000) + ".wav");
                    Waveform w = random_waveform(rng, static_cast<std::size_t>(rand_int(rng, 1, 300)), 0.3);
                    for (double& v : w.samples) v = std::clamp(v, -1.0, 1.0 - 1.0 / 32768);
                    write_wav(path, w);
                    const Waveform r = read_wav(path);
                    expect(r.size() == w.size(), "length");
                    for (std::size_t i = 0; i < w.size(); ++i)
                      expect(std::abs(r.samples[i] - w.samples[i]) <= 0.5 / 32768 + 1e-12, "quantisation");
                  }});
  laws.push_back({"mixer", "alignment files round trip", [](Rng& rng) {
                    const auto dir = std::filesystem::temp_directory_path() / "avse_laws";
                    std::filesystem::create_directories(dir);
                    const auto path = dir / ("a" + std::to_string(rng() % 1000) + ".tsv");
                    double total = 0;
                    Alignment a = random_alignment(rng, &total);
                    for (auto& iv : a) {
                      iv.start_ms = std::round(iv.start_ms * 1000) / 1000;
                      iv.end_ms = std::round(iv.end_ms * 1000) / 1000;
                    }
                    write_alignment(path, a);
                    const Alignment b = read_alignment(path);
                    expect(b.size() == a.size(), "count");
                    for (std::size_t i = 0; i < a.size(); ++i)
                      expect(b[i].phoneme == a[i].phoneme && close(b[i].start_ms, a[i].start_ms, 1e-12, 1e-9) &&
                                 close(b[i].end_ms, a[i].end_ms, 1e-12, 1e-9),
                             "interval");
                  }});
  return laws;
}

}  // namespace

double gaussian(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793 * uniform01(rng));
}

Waveform random_waveform(Rng& rng, std::size_t n, double amplitude) {
  Waveform w{std::vector<double>(n), kSampleRate};
  for (double& v : w.samples) v = amplitude * gaussian(rng);
  return w;
}

RealMatrix random_matrix(Rng& rng, int rows, int cols, double lo, double hi) {
  RealMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = uniform(rng, lo, hi);
  return m;
}

LawResult run_law(const Law& law, std::size_t cases, std::uint64_t seed) {
  LawResult r{law.module, law.name, 0, true, 0, {}, 0.0};
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < cases; ++i) {
    Rng rng(child_seed(seed, static_cast<std::uint64_t>(i)));
    try {
      law.check(rng);
    } catch (const std::exception& e) {
      r.ok = false;
      r.failing_case = i;
      r.failure = e.what();
      r.cases = i + 1;
      break;
    }
    r.cases = i + 1;
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

std::vector<Law> all_laws() {
  std::vector<Law> laws;
  for (auto&& group : {signal_laws(), masking_laws(), loss_laws(), metric_laws(), mixer_laws(), viseme_laws(),
                       neural_laws(), probe_laws(), synth_laws(), io_laws()})
    laws.insert(laws.end(), group.begin(), group.end());
  return laws;
}

}  // namespace avse::testing
