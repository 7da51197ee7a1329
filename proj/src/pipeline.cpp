#include "avse/pipeline.hpp"

#include <algorithm>
#include <map>

#include "avse/error.hpp"
#include "avse/masking.hpp"
#include "avse/metrics.hpp"
#include "avse/neural/network.hpp"
#include "avse/parallel.hpp"
#include "avse/random.hpp"

namespace avse {

namespace {

constexpr std::size_t kPredictBatch = 32;

std::vector<const AvSegment*> pointers(std::span<const AvSegment> segments) {
  std::vector<const AvSegment*> out;
  for (const auto& s : segments) out.push_back(&s);
  return out;
}

std::vector<RealMatrix> predict_all(const nn::Network& net, std::span<const AvSegment> segments) {
  std::vector<RealMatrix> out(segments.size());
  const auto ptrs = pointers(segments);
  const std::size_t n_batches = (segments.size() + kPredictBatch - 1) / kPredictBatch;
  parallel_for(n_batches, [&](std::size_t b) {
    const std::size_t lo = b * kPredictBatch, hi = std::min(segments.size(), lo + kPredictBatch);
    auto masks = nn::predict_masks(net, std::span<const AvSegment* const>(ptrs.data() + lo, hi - lo));
    for (std::size_t i = lo; i < hi; ++i) out[i] = std::move(masks[i - lo]);
  });
  return out;
}

RealMatrix stack_masks(std::span<const RealMatrix> masks) {
  RealMatrix out(static_cast<Eigen::Index>(masks.size()) * kSegmentFrames, kBins);
  for (std::size_t k = 0; k < masks.size(); ++k)
    out.middleRows(static_cast<Eigen::Index>(k) * kSegmentFrames, kSegmentFrames) = masks[k];
  return out;
}

Waveform clean_reference(const PreparedUtterance& u) { return istft(u.clean); }

double utterance_snr(const PreparedUtterance& u, const RealMatrix& mask) {
  const RatioMask m{mask};
  const Waveform est = reconstruct(apply_mask(m, power_spectrum(u.mixture)), u.mixture);
  return snr_db(clean_reference(u), est);
}

// Scores a mask source given per-utterance mask stacks.
template <class MaskFn>
EnhancementScores score(std::span<const PreparedUtterance> utterances, MaskFn&& masks_of) {
  EnhancementScores s;
  std::vector<double> snr(utterances.size());
  std::vector<double> mae_sum(utterances.size());
  std::vector<std::size_t> seg_count(utterances.size());
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    const auto& u = utterances[i];
    if (u.segments.empty()) continue;
    const std::vector<RealMatrix> masks = masks_of(u);
    for (std::size_t k = 0; k < masks.size(); ++k) mae_sum[i] += mask_mae(masks[k], u.segments[k].target_irm);
    seg_count[i] = masks.size();
  }
  parallel_for(utterances.size(), [&](std::size_t i) {
    if (utterances[i].segments.empty()) return;
    snr[i] = utterance_snr(utterances[i], stack_masks(masks_of(utterances[i])));
  });
  double snr_total = 0.0, mae_total = 0.0;
  for (std::size_t i = 0; i < utterances.size(); ++i) {
    if (seg_count[i] == 0) continue;
    ++s.utterances;
    s.segments += seg_count[i];
    snr_total += snr[i];
    mae_total += mae_sum[i];
  }
  if (s.utterances == 0) throw Error("no utterance long enough for a 200 ms segment");
  s.snr_db_mean = snr_total / static_cast<double>(s.utterances);
  s.mask_mae_mean = mae_total / static_cast<double>(s.segments);
  return s;
}

}  // namespace

UtteranceLoader manifest_loader(std::filesystem::path base_dir) {
  return [base = std::move(base_dir)](const ManifestEntry& e) { return load_utterance(e, base); };
}

UtteranceLoader plan_loader(const CorpusPlan& plan) {
  std::map<std::string, const UtterancePlan*> by_id;
  for (const auto& u : plan.utterances) by_id.emplace(u.id, &u);
  return [&plan, by_id = std::move(by_id)](const ManifestEntry& e) {
    const auto it = by_id.find(e.id);
    if (it == by_id.end()) throw Error("utterance " + e.id + " is not in the corpus plan");
    return render_utterance(plan, *it->second);
  };
}

std::vector<ManifestEntry> plan_manifest(const CorpusPlan& plan) {
  std::vector<ManifestEntry> out;
  for (const auto& u : plan.utterances) out.push_back(plan.manifest_entry(u));
  return out;
}

std::vector<PreparedUtterance> prepare_partition(std::span<const ManifestEntry> entries, Partition partition,
                                                 const UtteranceLoader& load, const MixSpec& spec) {
  auto pairs = pair_interferers(entries, partition, spec.seed);
  if (spec.max_utterances > 0 && pairs.size() > spec.max_utterances) {
    Rng rng(child_seed(spec.seed, "subset/" + std::string(to_string(partition))));
    shuffle(pairs, rng);
    pairs.resize(spec.max_utterances);
    std::sort(pairs.begin(), pairs.end(), [](const auto& a, const auto& b) { return a.target_id < b.target_id; });
  }
  std::map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : entries) by_id.emplace(e.id, &e);
  std::vector<PreparedUtterance> out(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    const Utterance target = load(*by_id.at(pairs[i].target_id));
    const Utterance interferer = load(*by_id.at(pairs[i].interferer_id));
    validate(target);
    const MixResult mix = mix_at_snr(target.audio, interferer.audio, spec.snr_db);
    out[i] = prepare_utterance(target, mix.mixture, mix.scaled_noise);
  });
  return out;
}

std::vector<AvSegment> collect_segments(std::span<const PreparedUtterance> utterances) {
  std::vector<AvSegment> out;
  for (const auto& u : utterances) out.insert(out.end(), u.segments.begin(), u.segments.end());
  return out;
}

EnhancementScores evaluate_model(const nn::Network& net, std::span<const PreparedUtterance> utterances) {
  std::vector<std::vector<RealMatrix>> predicted;
  for (const auto& u : utterances) predicted.push_back(predict_all(net, u.segments));
  std::map<const PreparedUtterance*, std::size_t> index;
  for (std::size_t i = 0; i < utterances.size(); ++i) index[&utterances[i]] = i;
  return score(utterances, [&](const PreparedUtterance& u) { return predicted[index.at(&u)]; });
}

EnhancementScores evaluate_oracle(std::span<const PreparedUtterance> utterances) {
  return score(utterances, [](const PreparedUtterance& u) {
    std::vector<RealMatrix> m;
    for (const auto& s : u.segments) m.push_back(s.target_irm);
    return m;
  });
}

EnhancementScores evaluate_mixture(std::span<const PreparedUtterance> utterances) {
  return score(utterances, [](const PreparedUtterance& u) {
    return std::vector<RealMatrix>(u.segments.size(), RealMatrix::Ones(kSegmentFrames, kBins));
  });
}

ModelEval model_eval(const nn::Network& net, std::span<const PreparedUtterance> utterances) {
  ModelEval e;
  for (const auto& u : utterances) {
    auto masks = predict_all(net, u.segments);
    for (std::size_t k = 0; k < u.segments.size(); ++k) {
      e.segment_keys.push_back(u.segments[k].key());
      e.pred_masks.push_back(std::move(masks[k]));
      e.target_masks.push_back(u.segments[k].target_irm);
      e.frame_labels.push_back(u.segments[k].frame_visemes);
    }
  }
  return e;
}

Waveform enhance(const nn::Network& net, const Waveform& mixture, const VideoClip* video) {
  validate(mixture);
  const bool av = net.config().mode == nn::Mode::AV;
  if (av && video == nullptr) throw Error("an audio-visual model needs the mouth video");
  const int n_seg = segment_count(mixture.size());
  if (n_seg == 0) throw Error("recording is shorter than one 200 ms segment");
  if (av && video->frame_count() < n_seg * kSegmentVideoFrames)
    throw Error("video has " + std::to_string(video->frame_count()) + " frames; " +
                std::to_string(n_seg * kSegmentVideoFrames) + " needed");

  // Segments are built with a silent stand-in target; only the mixture
  // spectra and video are read by the network.
  Utterance u;
  u.id = "input";
  u.audio = mixture;
  if (av) u.video = *video;
  else u.video.pixels.assign(static_cast<std::size_t>(n_seg) * kSegmentVideoFrames * kVideoFrameBytes, 0);
  const Waveform silent{std::vector<double>(mixture.size(), 0.0), kSampleRate};
  const PreparedUtterance prepared = prepare_utterance(u, mixture, silent);
  const RatioMask mask{stack_masks(predict_all(net, prepared.segments))};
  Waveform out = reconstruct(apply_mask(mask, power_spectrum(prepared.mixture)), prepared.mixture);
  out.samples.resize(mixture.size(), 0.0);
  return out;
}

AvSegment synthetic_segment(std::uint64_t seed) {
  const SpeakerProfile a = make_speaker_profile(seed, "a", Gender::F);
  const SpeakerProfile b = make_speaker_profile(seed, "b", Gender::M);
  const std::vector<std::string> pa{"sil", "b", "aa", "s", "iy", "t", "sil"};
  const std::vector<std::string> pb{"sil", "m", "uw", "sh", "eh", "k", "sil"};
  const Utterance target = synth_utterance(pa, a, child_seed(seed, "target"), "target");
  const Utterance other = synth_utterance(pb, b, child_seed(seed, "interferer"), "interferer");
  const MixResult mix = mix_at_snr(target.audio, other.audio, 0.0);
  auto segments = segment_utterance(target, mix.mixture, mix.scaled_noise);
  if (segments.size() < 2) throw Error("synthetic utterance too short");
  return segments[1];
}

}  // namespace avse
