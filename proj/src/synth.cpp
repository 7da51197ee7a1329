#include "avse/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "avse/error.hpp"
#include "avse/random.hpp"
#include "avse/wav.hpp"

namespace avse {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kCrossfadeMs = 20;
constexpr int kClosureMs = 30;
constexpr double kBackground = 180.0;
constexpr double kMouthInterior = 25.0;
constexpr double kTeethBright = 235.0;

using RK = RecipeKind;

// clang-format off
constexpr PhonemeRecipe kRecipes[] = {
    // phoneme kind           min  max   f1    f2    lo     hi     level  voicing
    {"aa",  RK::Voiced,     90, 160,  730, 1090,    0,     0,  0.10, false},
    {"ah",  RK::Voiced,     90, 160,  640, 1190,    0,     0,  0.10, false},
    {"ao",  RK::Voiced,     90, 160,  570,  840,    0,     0,  0.10, false},
    {"aw",  RK::Voiced,     90, 160,  680, 1300,    0,     0,  0.10, false},
    {"er",  RK::Voiced,     90, 160,  490, 1350,    0,     0,  0.10, false},
    {"oy",  RK::Voiced,     90, 160,  520, 1000,    0,     0,  0.10, false},
    {"sil", RK::Silence,    80, 200,    0,    0,    0,     0,  0.00, false},
    {"sp",  RK::Silence,    40,  80,    0,    0,    0,     0,  0.00, false},
    {"b",   RK::Plosive,    60, 100,  250,  900,  300,  1200,  0.06, true},
    {"p",   RK::Plosive,    60, 100,    0,    0,  400,  1600,  0.08, false},
    {"m",   RK::Voiced,     60, 110,  250, 1000,    0,     0,  0.07, false},
    {"ae",  RK::Voiced,     90, 160,  660, 1720,    0,     0,  0.10, false},
    {"eh",  RK::Voiced,     90, 160,  530, 1840,    0,     0,  0.10, false},
    {"ey",  RK::Voiced,     90, 160,  480, 2020,    0,     0,  0.10, false},
    {"ay",  RK::Voiced,     90, 160,  700, 1550,    0,     0,  0.10, false},
    {"y",   RK::Voiced,     60, 100,  300, 2250,    0,     0,  0.08, false},
    {"ch",  RK::Fricative,  80, 140,    0,    0, 2200,  4000,  0.06, false},
    {"jh",  RK::Fricative,  80, 140,  250, 1900, 2000,  3800,  0.05, true},
    {"sh",  RK::Fricative,  80, 140,    0,    0, 2000,  3800,  0.06, false},
    {"zh",  RK::Fricative,  80, 140,  250, 1900, 1900,  3600,  0.05, true},
    {"el",  RK::Voiced,     60, 110,  400, 1100,    0,     0,  0.08, false},
    {"l",   RK::Voiced,     60, 100,  360, 1300,    0,     0,  0.08, false},
    {"r",   RK::Voiced,     60, 100,  470, 1190,    0,     0,  0.08, false},
    {"uw",  RK::Voiced,     90, 160,  300,  870,    0,     0,  0.10, false},
    {"uh",  RK::Voiced,     90, 160,  440, 1020,    0,     0,  0.10, false},
    {"ow",  RK::Voiced,     90, 160,  500,  900,    0,     0,  0.10, false},
    {"w",   RK::Voiced,     60, 100,  320,  700,    0,     0,  0.08, false},
    {"g",   RK::Plosive,    60, 100,  250, 1900, 1200,  2600,  0.06, true},
    {"hh",  RK::Fricative,  60, 120,    0,    0,  400,  6000,  0.03, false},
    {"k",   RK::Plosive,    60, 100,    0,    0, 1500,  3000,  0.08, false},
    {"ng",  RK::Voiced,     60, 110,  250, 2200,    0,     0,  0.07, false},
    {"s",   RK::Fricative,  80, 140,    0,    0, 4500,  7500,  0.05, false},
    {"z",   RK::Fricative,  80, 140,  250, 1700, 4000,  7000,  0.05, true},
    {"d",   RK::Plosive,    60, 100,  250, 1700, 2500,  5500,  0.06, true},
    {"en",  RK::Voiced,     60, 110,  280, 1500,    0,     0,  0.07, false},
    {"n",   RK::Voiced,     60, 110,  250, 1600,    0,     0,  0.07, false},
    {"t",   RK::Plosive,    60, 100,    0,    0, 3000,  6500,  0.08, false},
    {"dh",  RK::Fricative,  70, 120,  250, 1500, 1200,  6000,  0.02, true},
    {"th",  RK::Fricative,  70, 120,    0,    0, 1500,  7000,  0.02, false},
    {"f",   RK::Fricative,  70, 130,    0,    0, 1000,  6000,  0.02, false},
    {"v",   RK::Fricative,  70, 130,  250, 1500,  900,  5000,  0.02, true},
    {"ih",  RK::Voiced,     90, 160,  390, 1990,    0,     0,  0.10, false},
    {"iy",  RK::Voiced,     90, 160,  270, 2290,    0,     0,  0.10, false},
};
// clang-format on

std::string lower_bare(std::string_view s) {
  if (s.size() >= 2 && s.front() == '/' && s.back() == '/') s = s.substr(1, s.size() - 2);
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

double gaussian(Rng& rng) {
  // Box-Muller on our own uniforms keeps output identical across standard libraries.
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

// RBJ constant-peak band-pass, applied twice.
void bandpass(std::vector<double>& x, double lo, double hi) {
  const double fc = std::sqrt(lo * hi);
  const double q = fc / (hi - lo);
  const double w0 = 2.0 * kPi * fc / kSampleRate;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b0 = alpha / a0, b2 = -alpha / a0;
  const double a1 = -2.0 * std::cos(w0) / a0, a2 = (1.0 - alpha) / a0;
  for (int pass = 0; pass < 2; ++pass) {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = v;
      y2 = y1;
      y1 = y;
      v = y;
    }
  }
}

void normalise_rms(std::vector<double>& x, double level) {
  double p = 0.0;
  for (double v : x) p += v * v;
  if (p <= 0.0) return;
  const double g = level / std::sqrt(p / static_cast<double>(x.size()));
  for (double& v : x) v *= g;
}

std::vector<double> harmonic_stack(std::size_t n, double f0, double f1, double f2, double level, Rng& rng) {
  std::vector<double> out(n, 0.0);
  const double bw1 = 90.0 + 0.08 * f1;
  const double bw2 = 120.0 + 0.06 * f2;
  for (int k = 1; k * f0 < 7000.0; ++k) {
    const double f = k * f0;
    const double amp = std::exp(-0.5 * std::pow((f - f1) / bw1, 2)) +
                       0.7 * std::exp(-0.5 * std::pow((f - f2) / bw2, 2)) + 0.02;
    const double phase = uniform(rng, 0.0, 2.0 * kPi);
    const double w = 2.0 * kPi * f / kSampleRate;
    for (std::size_t i = 0; i < n; ++i) out[i] += amp * std::sin(w * static_cast<double>(i) + phase);
  }
  normalise_rms(out, level);
  return out;
}

std::vector<double> band_noise(std::size_t n, double lo, double hi, double level, Rng& rng) {
  const std::size_t warmup = kSampleRate / 50;
  std::vector<double> x(n + warmup);
  for (double& v : x) v = gaussian(rng);
  bandpass(x, lo, hi);
  x.erase(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(warmup));
  normalise_rms(x, level);
  return x;
}

// Raw phone signal over n samples, before crossfading.
std::vector<double> phone_signal(const PhonemeRecipe& r, std::size_t n, const SpeakerProfile& profile, Rng& rng) {
  const double f1 = r.f1 * profile.formant_shift;
  const double f2 = r.f2 * profile.formant_shift;
  switch (r.kind) {
    case RK::Silence:
      return std::vector<double>(n, 0.0);
    case RK::Voiced:
      return harmonic_stack(n, profile.f0_hz, f1, f2, r.level, rng);
    case RK::Fricative: {
      auto x = band_noise(n, r.band_lo, r.band_hi, r.level, rng);
      if (r.voicing) {
        const auto v = harmonic_stack(n, profile.f0_hz, f1, f2, 0.4 * r.level, rng);
        for (std::size_t i = 0; i < n; ++i) x[i] += v[i];
      }
      return x;
    }
    case RK::Plosive: {
      std::vector<double> x(n, 0.0);
      const std::size_t closure = std::min<std::size_t>(n, kSampleRate * kClosureMs / 1000);
      if (closure >= n) return x;
      auto burst = band_noise(n - closure, r.band_lo, r.band_hi, r.level, rng);
      const double tau = 0.025 * kSampleRate;
      for (std::size_t i = 0; i < burst.size(); ++i) x[closure + i] = burst[i] * std::exp(-static_cast<double>(i) / tau);
      if (r.voicing) {
        const auto v = harmonic_stack(n - closure, profile.f0_hz, f1, f2, 0.3 * r.level, rng);
        for (std::size_t i = 0; i < v.size(); ++i) x[closure + i] += v[i];
      }
      return x;
    }
  }
  return std::vector<double>(n, 0.0);
}

double raised_cosine(double u) { return 0.5 - 0.5 * std::cos(kPi * std::clamp(u, 0.0, 1.0)); }

std::string speaker_name(int i) {
  std::string digits = std::to_string(i);
  if (digits.size() < 3) digits.insert(0, 3 - digits.size(), '0');
  return "spk" + digits;
}

constexpr double kPauseProbability = 0.2;

std::vector<PlannedPhone> sample_phones(std::uint64_t seed) {
  Rng rng(seed);
  const int length = 8 + static_cast<int>(uniform_index(rng, 13));
  std::vector<std::string> names;
  names.emplace_back("sil");
  const auto table = phoneme_table();
  for (int i = 0; i < length - 2; ++i) {
    const Viseme v = kAllVisemes[uniform_index(rng, kVisemeCount)];
    std::vector<std::string_view> members;
    for (const auto& e : table)
      if (e.viseme == v) members.push_back(e.phoneme);
    names.emplace_back(members[uniform_index(rng, members.size())]);
    // short pauses between words
    if (i + 1 < length - 2 && uniform01(rng) < kPauseProbability) names.emplace_back("sil");
  }
  names.emplace_back("sil");
  std::vector<PlannedPhone> phones;
  for (const auto& n : names) {
    const auto& r = phoneme_recipe(n);
    phones.push_back({n, r.min_ms + static_cast<int>(uniform_index(rng, r.max_ms - r.min_ms + 1))});
  }
  return phones;
}

Alignment alignment_of(std::span<const PlannedPhone> phones) {
  Alignment a;
  double t = 0.0;
  for (const auto& p : phones) {
    a.push_back({t, t + p.duration_ms, p.phoneme});
    t += p.duration_ms;
  }
  return a;
}

}  // namespace

SpeakerProfile make_speaker_profile(std::uint64_t corpus_seed, const std::string& speaker_id, Gender gender) {
  Rng rng(child_seed(corpus_seed, "speaker/" + speaker_id));
  SpeakerProfile p;
  p.speaker_id = speaker_id;
  p.gender = gender;
  p.f0_hz = gender == Gender::F ? uniform(rng, 160.0, 250.0) : uniform(rng, 90.0, 150.0);
  p.formant_shift = uniform(rng, 0.9, 1.1);
  p.mouth_scale = uniform(rng, 0.85, 1.15);
  return p;
}

MouthShape mouth_shape(Viseme v) {
  switch (v) {
    case Viseme::V1: return {0.80, 0.45, 0.00};
    case Viseme::SIL: return {0.00, 0.55, 0.00};
    case Viseme::P: return {0.00, 0.10, 0.00};
    case Viseme::V3: return {0.55, 0.85, 0.30};
    case Viseme::SH: return {0.55, 0.35, 1.00};
    case Viseme::L: return {0.35, 0.60, 0.65};
    case Viseme::V2: return {0.45, 0.15, 0.00};
    case Viseme::G: return {0.22, 0.70, 0.45};
    case Viseme::T: return {0.23, 0.71, 0.46};
    case Viseme::Z: return {0.12, 0.80, 0.95};
    case Viseme::TH: return {0.30, 0.50, 0.15};
    case Viseme::F: return {0.10, 0.50, 0.75};
    case Viseme::V4: return {0.40, 1.00, 0.55};
  }
  throw Error("unknown viseme");
}

const PhonemeRecipe& phoneme_recipe(std::string_view phoneme) {
  const std::string key = lower_bare(phoneme);
  for (const auto& r : kRecipes)
    if (r.phoneme == key) return r;
  throw Error("no synthesis recipe for phoneme '" + std::string(phoneme) + "'");
}

std::size_t UtterancePlan::sample_count() const {
  std::size_t ms = 0;
  for (const auto& p : phones) ms += static_cast<std::size_t>(p.duration_ms);
  return ms * kSampleRate / 1000;
}

std::vector<std::uint8_t> render_mouth(Viseme v, double mouth_scale) {
  const MouthShape m = mouth_shape(v);
  const double a = (24.0 + 48.0 * m.width) * mouth_scale;
  const double b = (3.0 + 44.0 * m.aperture) * mouth_scale;
  const double cx = kVideoWidth / 2.0, cy = kVideoHeight / 2.0;
  const double teeth_bottom = cy - b + 0.7 * b;  // upper 35% of the opening
  const double teeth = kMouthInterior + m.teeth * (kTeethBright - kMouthInterior);
  constexpr int kSuper = 4;
  std::vector<std::uint8_t> frame(kVideoFrameBytes);
  for (int y = 0; y < kVideoHeight; ++y) {
    for (int x = 0; x < kVideoWidth; ++x) {
      double acc = 0.0;
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double px = x + (sx + 0.5) / kSuper, py = y + (sy + 0.5) / kSuper;
          const double dx = (px - cx) / a, dy = (py - cy) / b;
          if (dx * dx + dy * dy > 1.0) acc += kBackground;
          else acc += py < teeth_bottom ? teeth : kMouthInterior;
        }
      }
      frame[static_cast<std::size_t>(y) * kVideoWidth + x] =
          static_cast<std::uint8_t>(std::lround(acc / (kSuper * kSuper)));
    }
  }
  return frame;
}

Utterance synth_utterance(std::span<const PlannedPhone> phones, const SpeakerProfile& profile, std::uint64_t seed,
                          const std::string& utterance_id) {
  if (phones.empty()) throw Error("cannot synthesise an empty phoneme sequence");
  for (const auto& p : phones) {
    if (p.duration_ms <= 0) throw Error("phoneme '" + p.phoneme + "' has non-positive duration");
    phoneme_to_viseme(p.phoneme);
  }
  Utterance u;
  u.id = utterance_id;
  u.speaker_id = profile.speaker_id;
  u.gender = profile.gender;
  u.alignment = alignment_of(phones);

  const std::size_t total = static_cast<std::size_t>(std::llround(u.alignment.back().end_ms * kSampleRate / 1000.0));
  std::vector<double> audio(total, 0.0);
  const double half_fade = kCrossfadeMs / 2.0 * kSampleRate / 1000.0;
  const double fade = 2.0 * half_fade;
  for (std::size_t k = 0; k < phones.size(); ++k) {
    const double start = u.alignment[k].start_ms * kSampleRate / 1000.0;
    const double end = u.alignment[k].end_ms * kSampleRate / 1000.0;
    // Each phone extends half a crossfade beyond both boundaries; the sin^2
    // ramps of neighbours sum to one.
    const auto lo = static_cast<std::ptrdiff_t>(std::floor(start - half_fade));
    const auto hi = static_cast<std::ptrdiff_t>(std::ceil(end + half_fade));
    const std::size_t n = static_cast<std::size_t>(hi - lo);
    Rng rng(child_seed(seed, static_cast<std::uint64_t>(k)));
    const auto sig = phone_signal(phoneme_recipe(phones[k].phoneme), n, profile, rng);
    for (std::size_t i = 0; i < n; ++i) {
      const std::ptrdiff_t t = lo + static_cast<std::ptrdiff_t>(i);
      if (t < 0 || t >= static_cast<std::ptrdiff_t>(total)) continue;
      const double tc = static_cast<double>(t) + 0.5;
      const double w = raised_cosine((tc - (start - half_fade)) / fade) * raised_cosine(((end + half_fade) - tc) / fade);
      audio[static_cast<std::size_t>(t)] += w * sig[i];
    }
  }
  u.audio.samples = std::move(audio);
  u.audio.sample_rate_hz = kSampleRate;

  const int n_frames = static_cast<int>(total * kVideoFps / kSampleRate);
  std::map<Viseme, std::vector<std::uint8_t>> cache;
  std::vector<double> centres(static_cast<std::size_t>(n_frames));
  for (int f = 0; f < n_frames; ++f) centres[static_cast<std::size_t>(f)] = 1000.0 * (f + 0.5) / kVideoFps;
  const auto labels = label_frames(u.alignment, centres);
  u.video.pixels.reserve(static_cast<std::size_t>(n_frames) * kVideoFrameBytes);
  for (const Viseme v : labels) {
    auto it = cache.find(v);
    if (it == cache.end()) it = cache.emplace(v, render_mouth(v, profile.mouth_scale)).first;
    u.video.pixels.insert(u.video.pixels.end(), it->second.begin(), it->second.end());
  }
  return u;
}

Utterance synth_utterance(std::span<const std::string> phonemes, const SpeakerProfile& profile, std::uint64_t seed,
                          const std::string& utterance_id) {
  Rng rng(child_seed(seed, "durations"));
  std::vector<PlannedPhone> phones;
  for (const auto& p : phonemes) {
    const auto& r = phoneme_recipe(p);
    phones.push_back({lower_bare(p), r.min_ms + static_cast<int>(uniform_index(rng, r.max_ms - r.min_ms + 1))});
  }
  return synth_utterance(std::span<const PlannedPhone>(phones), profile, seed, utterance_id);
}

const SpeakerProfile& CorpusPlan::speaker(const std::string& id) const {
  for (const auto& s : speakers)
    if (s.speaker_id == id) return s;
  throw Error("unknown speaker " + id);
}

ManifestEntry CorpusPlan::manifest_entry(const UtterancePlan& u) const {
  return {u.id, u.speaker_id, u.gender, "wav/" + u.id + ".wav", "video/" + u.id + ".gvf",
          "align/" + u.id + ".tsv", partition_of(u)};
}

std::array<std::size_t, kVisemeCount> viseme_frame_counts(const CorpusPlan& plan, Partition p) {
  std::array<std::size_t, kVisemeCount> counts{};
  for (const auto& u : plan.utterances) {
    if (plan.partition_of(u) != p) continue;
    const Alignment a = alignment_of(u.phones);
    const int n_seg = segment_count(u.sample_count());
    for (int k = 0; k < n_seg; ++k) {
      const auto centres = segment_frame_centers_ms(k);
      for (const Viseme v : label_frames(a, centres)) ++counts[static_cast<std::size_t>(v)];
    }
  }
  return counts;
}

CorpusPlan plan_corpus(const CorpusSpec& spec) {
  if (spec.n_speakers < 20) throw Error("corpus needs at least 10 speakers per gender");
  if (spec.n_speakers % 2 != 0) throw Error("n_speakers must be even for a gender-balanced corpus");
  if (spec.utterances_per_speaker < 1) throw Error("utterances_per_speaker must be positive");
  CorpusPlan plan;
  plan.spec = spec;
  std::vector<SpeakerInfo> infos;
  for (int i = 0; i < spec.n_speakers; ++i) {
    const Gender g = i % 2 == 0 ? Gender::F : Gender::M;
    const std::string id = speaker_name(i);
    plan.speakers.push_back(make_speaker_profile(spec.seed, id, g));
    infos.push_back({id, g});
  }
  SplitSpec split_spec;
  split_spec.seed = spec.seed;
  plan.split = split_speakers(infos, split_spec);

  for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
    const std::uint64_t plan_seed = attempt == 0 ? spec.seed : child_seed(spec.seed, "attempt/" + std::to_string(attempt));
    plan.utterances.clear();
    plan.attempt = attempt;
    for (const auto& s : plan.speakers) {
      for (int j = 0; j < spec.utterances_per_speaker; ++j) {
        UtterancePlan u;
        u.id = s.speaker_id + "_u" + std::to_string(j);
        u.speaker_id = s.speaker_id;
        u.gender = s.gender;
        u.seed = child_seed(plan_seed, u.id);
        u.phones = sample_phones(u.seed);
        plan.utterances.push_back(std::move(u));
      }
    }
    bool ok = true;
    for (const Partition p : {Partition::Train, Partition::Val, Partition::Test}) {
      const auto counts = viseme_frame_counts(plan, p);
      for (const auto c : counts) ok = ok && c >= static_cast<std::size_t>(spec.min_viseme_frames);
    }
    if (ok) return plan;
  }
  throw Error("could not reach " + std::to_string(spec.min_viseme_frames) +
              " frames per viseme in every partition after " + std::to_string(spec.max_attempts) +
              " attempts; add speakers or utterances");
}

Utterance render_utterance(const CorpusPlan& plan, const UtterancePlan& u) {
  return synth_utterance(std::span<const PlannedPhone>(u.phones), plan.speaker(u.speaker_id), u.seed, u.id);
}

std::vector<ManifestEntry> generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  const CorpusPlan plan = plan_corpus(spec);
  for (const char* sub : {"wav", "video", "align"}) std::filesystem::create_directories(out_dir / sub);
  std::vector<ManifestEntry> entries;
  for (const auto& u : plan.utterances) {
    const Utterance utt = render_utterance(plan, u);
    const ManifestEntry e = plan.manifest_entry(u);
    write_wav(out_dir / e.wav_path, utt.audio);
    write_gvf(out_dir / e.video_path, utt.video);
    write_alignment(out_dir / e.align_path, utt.alignment);
    entries.push_back(e);
  }
  write_manifest(out_dir / "manifest.jsonl", entries);
  return entries;
}

}  // namespace avse
