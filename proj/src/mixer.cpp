#include "avse/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "avse/error.hpp"
#include "avse/masking.hpp"
#include "avse/random.hpp"

namespace avse {
namespace {

Waveform fit_length(const Waveform& w, std::size_t n) {
  Waveform out;
  out.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.samples[i] = w.samples[i % w.samples.size()];
  return out;
}

Waveform padded(const Waveform& w, std::size_t n) {
  Waveform out = w;
  if (out.samples.size() < n) out.samples.resize(n, 0.0);
  return out;
}

ComplexSpectrogram leading_frames(ComplexSpectrogram s, Eigen::Index n) {
  s.data.conservativeResize(n, Eigen::NoChange);
  return s;
}

void check_ratios(const std::array<double, 3>& r) {
  for (double x : r)
    if (x < 0.0) throw Error("split ratios must be non-negative");
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) throw Error("split ratios must sum to 1");
}

}  // namespace

MixResult mix_at_snr(const Waveform& target, const Waveform& interferer, double snr_db) {
  validate(target);
  validate(interferer);
  const double p_target = mean_power(target);
  if (!(p_target > 0.0)) throw Error("mix_at_snr: silent signal (target)");
  if (!(mean_power(interferer) > 0.0)) throw Error("mix_at_snr: silent signal (interferer)");

  Waveform noise = fit_length(interferer, target.size());
  const double p_noise = mean_power(noise);
  if (!(p_noise > 0.0)) throw Error("mix_at_snr: silent signal (interferer after fitting)");

  MixResult r;
  r.gain = std::sqrt(p_target / (p_noise * std::pow(10.0, snr_db / 10.0)));
  for (double& x : noise.samples) x *= r.gain;
  r.mixture.samples.resize(target.size());
  for (std::size_t i = 0; i < target.size(); ++i)
    r.mixture.samples[i] = target.samples[i] + noise.samples[i];
  r.scaled_noise = std::move(noise);
  return r;
}

int segment_count(std::size_t n_samples) { return static_cast<int>(n_samples / kSegmentSamples); }

std::array<double, kSegmentFrames> segment_frame_centers_ms(int segment_index) {
  const StftConfig cfg;
  std::array<double, kSegmentFrames> t{};
  for (int j = 0; j < kSegmentFrames; ++j) {
    const double centre = static_cast<double>(segment_index) * kSegmentSamples +
                          j * cfg.hop_length() + cfg.window_length() / 2.0;
    t[j] = 1000.0 * centre / kSampleRate;
  }
  return t;
}

PreparedUtterance prepare_utterance(const Utterance& u, const Waveform& mixture, const Waveform& noise) {
  if (mixture.size() != u.audio.size() || noise.size() != u.audio.size())
    throw Error("segment_utterance: mixture/noise length differs from utterance " + u.id);

  PreparedUtterance out;
  const int n_seg = segment_count(u.audio.size());
  if (n_seg == 0) return out;

  const StftConfig cfg;
  const Eigen::Index n_frames = static_cast<Eigen::Index>(n_seg) * kSegmentFrames;
  const std::size_t needed = static_cast<std::size_t>(n_frames - 1) * cfg.hop_length() + cfg.window_length();
  out.clean = leading_frames(stft(padded(u.audio, needed), cfg), n_frames);
  out.noise = leading_frames(stft(padded(noise, needed), cfg), n_frames);
  out.mixture = leading_frames(stft(padded(mixture, needed), cfg), n_frames);

  const PowerSpectrogram clean_power = power_spectrum(out.clean);
  const PowerSpectrogram noise_power = power_spectrum(out.noise);
  const PowerSpectrogram mix_power = power_spectrum(out.mixture);
  const RatioMask irm = ideal_ratio_mask(clean_power, noise_power);

  if (u.video.frame_count() < n_seg * kSegmentVideoFrames)
    throw Error("segment_utterance: utterance " + u.id + " has too few video frames");

  out.segments.reserve(n_seg);
  for (int k = 0; k < n_seg; ++k) {
    AvSegment s;
    s.mixture_power = mix_power.data.middleRows(k * kSegmentFrames, kSegmentFrames);
    s.target_irm = irm.data.middleRows(k * kSegmentFrames, kSegmentFrames);
    const std::size_t fb = u.video.frame_bytes();
    const auto first = u.video.pixels.begin() + static_cast<std::ptrdiff_t>(k * kSegmentVideoFrames * fb);
    s.video.assign(first, first + static_cast<std::ptrdiff_t>(kSegmentVideoFrames * fb));
    const auto centres = segment_frame_centers_ms(k);
    s.frame_visemes = label_frames(u.alignment, centres);
    s.speaker_id = u.speaker_id;
    s.utterance_id = u.id;
    s.segment_index = k;
    out.segments.push_back(std::move(s));
  }
  return out;
}

std::vector<AvSegment> segment_utterance(const Utterance& u, const Waveform& mixture, const Waveform& noise) {
  return prepare_utterance(u, mixture, noise).segments;
}

const std::vector<std::string>& SpeakerSplit::of(Partition p) const {
  switch (p) {
    case Partition::Train: return train;
    case Partition::Val: return val;
    case Partition::Test: return test;
  }
  throw Error("bad partition");
}

Partition SpeakerSplit::partition_of(const std::string& speaker_id) const {
  for (Partition p : {Partition::Train, Partition::Val, Partition::Test}) {
    const auto& v = of(p);
    if (std::find(v.begin(), v.end(), speaker_id) != v.end()) return p;
  }
  throw Error("speaker " + speaker_id + " is in no partition");
}

std::array<std::size_t, 3> partition_counts(std::size_t n, const std::array<double, 3>& ratios) {
  check_ratios(ratios);
  std::array<std::size_t, 3> counts{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * ratios[i];
    counts[i] = static_cast<std::size_t>(std::floor(quota + 1e-9));
    remainder[i] = quota - static_cast<double>(counts[i]);
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b] + 1e-12; });
  for (std::size_t i = 0; assigned < n; ++i, ++assigned) counts[order[i % 3]] += 1;
  return counts;
}

SpeakerSplit split_speakers(std::span<const SpeakerInfo> speakers, const SplitSpec& spec) {
  check_ratios(spec.ratios);
  std::map<int, std::vector<std::string>> groups;
  for (const auto& s : speakers) groups[spec.stratify_by_gender ? static_cast<int>(s.gender) : 0].push_back(s.id);

  SpeakerSplit out;
  for (auto& [key, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
      throw Error("split_speakers: duplicate speaker id");
    if (ids.size() < 10)
      throw Error("split_speakers: need at least 10 speakers per group, got " + std::to_string(ids.size()));
    Rng rng(child_seed(spec.seed, static_cast<std::uint64_t>(key)));
    shuffle(ids, rng);
    const auto counts = partition_counts(ids.size(), spec.ratios);
    auto it = ids.begin();
    for (int p = 0; p < 3; ++p) {
      auto& dst = p == 0 ? out.train : p == 1 ? out.val : out.test;
      dst.insert(dst.end(), it, it + static_cast<std::ptrdiff_t>(counts[p]));
      it += static_cast<std::ptrdiff_t>(counts[p]);
    }
  }
  if (groups.empty()) throw Error("split_speakers: no speakers");
  return out;
}

std::vector<InterfererPair> pair_interferers(std::span<const ManifestEntry> utterances,
                                             Partition partition, std::uint64_t seed) {
  std::vector<const ManifestEntry*> pool;
  for (const auto& e : utterances)
    if (e.partition == partition) pool.push_back(&e);
  std::sort(pool.begin(), pool.end(), [](auto* a, auto* b) { return a->id < b->id; });

  std::vector<InterfererPair> pairs;
  pairs.reserve(pool.size());
  for (const ManifestEntry* target : pool) {
    std::vector<const ManifestEntry*> candidates;
    for (const ManifestEntry* e : pool)
      if (e->speaker_id != target->speaker_id) candidates.push_back(e);
    if (candidates.empty())
      throw Error("pair_interferers: partition " + std::string(to_string(partition)) +
                  " needs at least two speakers");
    Rng rng(child_seed(seed, target->id));
    pairs.push_back({target->id, candidates[uniform_index(rng, candidates.size())]->id});
  }
  return pairs;
}

}  // namespace avse
