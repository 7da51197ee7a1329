#include "avse/cli.hpp"

#include <chrono>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "avse/corpus_io.hpp"
#include "avse/error.hpp"
#include "avse/metrics.hpp"
#include "avse/mixer.hpp"
#include "avse/neural/checkpoint.hpp"
#include "avse/neural/gradcheck.hpp"
#include "avse/neural/train.hpp"
#include "avse/parallel.hpp"
#include "avse/pipeline.hpp"
#include "avse/probe.hpp"
#include "avse/synth.hpp"
#include "avse/viseme.hpp"
#include "avse/wav.hpp"

#ifndef AVSE_GIT_DESCRIBE
#define AVSE_GIT_DESCRIBE "unknown"
#endif

namespace avse::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kGradTolerance = 1e-4;

// Reads either a plain JSON object of option values (optionally nested per
// subcommand) or a run record, whose "config" block replays a run.
class JsonConfig : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& in) const override {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    if (j.contains("subcommand") && j.contains("config")) {
      add(items, {j.at("subcommand").get<std::string>()}, j.at("config"));
    } else {
      add(items, {}, j);
    }
    return items;
  }

 private:
  static std::string scalar(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

  static void add(std::vector<CLI::ConfigItem>& items, const std::vector<std::string>& parents, const json& obj) {
    for (const auto& [key, value] : obj.items()) {
      if (value.is_object()) {
        auto p = parents;
        p.push_back(key);
        add(items, p, value);
        continue;
      }
      CLI::ConfigItem item;
      item.parents = parents;
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      } else {
        item.inputs.push_back(scalar(value));
      }
      items.push_back(std::move(item));
    }
  }
};

struct RunRecord {
  std::string subcommand;
  json config = json::object();
  json seeds = json::object();
  json metrics = json::object();
  json outputs = json::object();
};

json option_values(const CLI::App& sub) {
  json cfg = json::object();
  for (const CLI::Option* opt : sub.get_options()) {
    if (opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    if (name == "help" || name == "run-record") continue;
    std::vector<std::string> values = opt->results();
    if (values.empty()) {
      if (opt->get_default_str().empty()) continue;
      values.push_back(opt->get_default_str());
    }
    if (opt->get_expected_max() > 1) {
      json arr = json::array();
      for (const auto& v : values) arr.push_back(v);
      cfg[name] = arr;
    } else {
      cfg[name] = values.back();
    }
  }
  return cfg;
}

void write_record(const fs::path& path, const RunRecord& r) {
  json j;
  j["subcommand"] = r.subcommand;
  j["config"] = r.config;
  j["seeds"] = r.seeds;
  j["git_describe"] = AVSE_GIT_DESCRIBE;
  j["metrics"] = r.metrics;
  j["outputs"] = r.outputs;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write run record " + path.string());
  out << j.dump(2) << '\n';
}

fs::path record_path(const std::string& requested, const fs::path& fallback) {
  return requested.empty() ? fallback : fs::path(requested);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Shared data options of the subcommands that mix a manifest partition.
struct DataOptions {
  std::string manifest;
  double snr_db = 0.0;
  std::uint64_t mix_seed = 0;

  void add(CLI::App* sub) {
    sub->add_option("--manifest", manifest, "Corpus manifest (JSONL)")->required()->check(CLI::ExistingFile);
    sub->add_option("--snr-db", snr_db, "Mixing SNR in dB")->capture_default_str();
    sub->add_option("--mix-seed", mix_seed, "Seed for interferer pairing")->capture_default_str();
  }

  std::vector<PreparedUtterance> load(Partition p, std::size_t max_utts = 0) const {
    const auto entries = read_manifest(manifest);
    MixSpec spec;
    spec.snr_db = snr_db;
    spec.seed = mix_seed;
    spec.max_utterances = max_utts;
    return prepare_partition(entries, p, manifest_loader(fs::path(manifest).parent_path()), spec);
  }
};

std::string model_name(const fs::path& ckpt) { return ckpt.stem().string(); }

}  // namespace

int run(int argc, char** argv) {
  tune_allocator();
  CLI::App app{"Audio-visual mask-based speech enhancement toolkit", "avse"};
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON file of option values or a run record to replay");
  app.require_subcommand(1);
  std::string record_arg;

  auto add_record = [&](CLI::App* sub) {
    sub->add_option("--run-record", record_arg, "Where to write the JSON run record");
  };

  // synth
  CorpusSpec synth_spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic audio-visual corpus");
  synth->add_option("--speakers", synth_spec.n_speakers, "Number of speakers (even)")->capture_default_str();
  synth->add_option("--utts", synth_spec.utterances_per_speaker, "Utterances per speaker")->capture_default_str();
  synth->add_option("--seed", synth_spec.seed, "Corpus seed")->capture_default_str();
  synth->add_option("--min-viseme-frames", synth_spec.min_viseme_frames, "Frames per viseme and partition")
      ->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();
  add_record(synth);

  // mix
  DataOptions mix_data;
  std::string mix_out;
  auto* mix = app.add_subcommand("mix", "Mix every utterance with a same-partition interferer");
  mix_data.add(mix);
  mix->add_option("--seed", mix_data.mix_seed, "Seed for interferer pairing")->capture_default_str();
  mix->remove_option(mix->get_option("--mix-seed"));
  mix->add_option("--out", mix_out, "Output directory (default: <manifest dir>/mix)");
  add_record(mix);

  // train
  DataOptions train_data;
  nn::ModelConfig model_cfg;
  nn::TrainConfig train_cfg;
  std::string mode_str = "AV", loss_str = "hybrid", encoder_str = "fc", ckpt_out;
  std::size_t max_train_utts = 0, max_val_utts = 0;
  auto* train = app.add_subcommand("train", "Train a mask predictor");
  train_data.add(train);
  train->add_option("--mode", mode_str, "A or AV")->capture_default_str()->check(CLI::IsMember({"A", "AV"}));
  train->add_option("--loss", loss_str, "mse, mae or hybrid")
      ->capture_default_str()
      ->check(CLI::IsMember({"mse", "mae", "hybrid"}));
  train->add_option("--alpha", train_cfg.alpha, "Cosine weight of the hybrid loss")->capture_default_str();
  train->add_option("--audio-encoder", encoder_str, "fc or lstm")
      ->capture_default_str()
      ->check(CLI::IsMember({"fc", "lstm"}));
  train->add_option("--scale", model_cfg.scale_factor, "Width scale factor")->capture_default_str();
  train->add_option("--seed", model_cfg.seed, "Initialisation and shuffling seed")->capture_default_str();
  train->add_option("--epochs", train_cfg.max_epochs, "Maximum epochs")->capture_default_str();
  train->add_option("--lr", train_cfg.learning_rate, "Adam learning rate")->capture_default_str();
  train->add_option("--batch", train_cfg.batch_size, "Batch size in segments")->capture_default_str();
  train->add_option("--patience", train_cfg.patience, "Early-stopping patience in epochs")->capture_default_str();
  train->add_option("--max-train-utts", max_train_utts, "Seeded subset of training utterances (0 = all)")
      ->capture_default_str();
  train->add_option("--max-val-utts", max_val_utts, "Seeded subset of validation utterances (0 = all)")
      ->capture_default_str();
  train->add_option("--out-ckpt", ckpt_out, "Checkpoint path")->required();
  add_record(train);

  // enhance
  std::string enh_ckpt, enh_wav, enh_video, enh_out;
  auto* enh = app.add_subcommand("enhance", "Enhance a noisy recording");
  enh->add_option("--ckpt", enh_ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  enh->add_option("--wav", enh_wav, "Noisy 16 kHz mono WAV")->required()->check(CLI::ExistingFile);
  enh->add_option("--video", enh_video, "Mouth video (GVF); required for AV models")->check(CLI::ExistingFile);
  enh->add_option("--out-wav", enh_out, "Enhanced WAV")->required();
  add_record(enh);

  // eval
  DataOptions eval_data;
  std::vector<std::string> eval_ckpts;
  std::string eval_out = "eval.csv";
  auto* eval = app.add_subcommand("eval", "Score checkpoints, the oracle mask and the mixture on the test set");
  eval_data.add(eval);
  eval->add_option("--ckpt", eval_ckpts, "Checkpoint (repeatable)")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "CSV path")->capture_default_str();
  add_record(eval);

  // visemes
  DataOptions vis_data;
  std::string vis_a, vis_av, vis_csv = "visemes.csv", vis_svg;
  auto* vis = app.add_subcommand("visemes", "Per-viseme mask error of an A and an AV model");
  vis_data.add(vis);
  vis->add_option("--ckpt-a", vis_a, "Audio-only checkpoint")->required()->check(CLI::ExistingFile);
  vis->add_option("--ckpt-av", vis_av, "Audio-visual checkpoint")->required()->check(CLI::ExistingFile);
  vis->add_option("--out", vis_csv, "CSV path")->capture_default_str();
  vis->add_option("--out-svg", vis_svg, "SVG path (default: CSV path with .svg)");
  add_record(vis);

  // probe
  DataOptions probe_data;
  std::string probe_ckpt, probe_out = "probe.csv";
  std::vector<double> c_grid(kDefaultCGrid.begin(), kDefaultCGrid.end());
  std::uint64_t probe_seed = 0;
  LogRegOptions logreg_opts;
  auto* probe = app.add_subcommand("probe", "Viseme probe on frozen video-encoder embeddings");
  probe_data.add(probe);
  probe->add_option("--ckpt", probe_ckpt, "Audio-visual checkpoint")->required()->check(CLI::ExistingFile);
  probe->add_option("--c-grid", c_grid, "Inverse regularisation strengths")
      ->delimiter(',')
      ->capture_default_str();
  probe->add_option("--seed", probe_seed, "Probe split seed")->capture_default_str();
  probe->add_option("--max-iters", logreg_opts.max_iters, "Gradient-descent iterations")->capture_default_str();
  probe->add_option("--out", probe_out, "CSV path")->capture_default_str();
  add_record(probe);

  // gradcheck
  nn::GradCheckOptions gc_opts;
  nn::ModelConfig gc_cfg;
  gc_cfg.scale_factor = 0.125;
  std::string gc_loss = "hybrid", gc_mode = "AV", gc_encoder = "fc";
  auto* gc = app.add_subcommand("gradcheck", "Compare analytic gradients with central differences");
  gc->add_option("--scale", gc_cfg.scale_factor, "Width scale factor")->capture_default_str();
  gc->add_option("--loss", gc_loss, "mse, mae or hybrid")
      ->capture_default_str()
      ->check(CLI::IsMember({"mse", "mae", "hybrid"}));
  gc->add_option("--alpha", gc_opts.alpha, "Cosine weight of the hybrid loss")->capture_default_str();
  gc->add_option("--mode", gc_mode, "A or AV")->capture_default_str()->check(CLI::IsMember({"A", "AV"}));
  gc->add_option("--audio-encoder", gc_encoder, "fc or lstm")
      ->capture_default_str()
      ->check(CLI::IsMember({"fc", "lstm"}));
  gc->add_option("--seed", gc_opts.seed, "Model and data seed")->capture_default_str();
  gc->add_option("--max-params", gc_opts.max_params, "Parameters compared (0 = all)")->capture_default_str();
  add_record(gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  const auto t0 = std::chrono::steady_clock::now();
  try {
    RunRecord rec;
    CLI::App* sub = app.get_subcommands().front();
    rec.subcommand = sub->get_name();
    rec.config = option_values(*sub);

    if (sub == synth) {
      rec.seeds["corpus"] = synth_spec.seed;
      const fs::path out(synth_out);
      const auto entries = generate_corpus(synth_spec, out);
      const std::string digest = corpus_digest(out / "manifest.jsonl");
      rec.metrics["utterances"] = entries.size();
      rec.metrics["speakers"] = synth_spec.n_speakers;
      rec.metrics["digest"] = digest;
      rec.outputs["manifest"] = (out / "manifest.jsonl").string();
      std::cout << "wrote " << entries.size() << " utterances to " << out.string() << "\nmanifest digest " << digest
                << '\n';
      write_record(record_path(record_arg, out / "run.json"), rec);

    } else if (sub == mix) {
      rec.seeds["mix"] = mix_data.mix_seed;
      const fs::path manifest(mix_data.manifest);
      const fs::path out = mix_out.empty() ? manifest.parent_path() / "mix" : fs::path(mix_out);
      fs::create_directories(out);
      const auto entries = read_manifest(manifest);
      const auto load = manifest_loader(manifest.parent_path());
      std::map<std::string, const ManifestEntry*> by_id;
      for (const auto& e : entries) by_id.emplace(e.id, &e);
      std::ofstream list(out / "mixes.jsonl");
      std::size_t n = 0;
      for (const Partition p : {Partition::Train, Partition::Val, Partition::Test}) {
        for (const auto& pair : pair_interferers(entries, p, mix_data.mix_seed)) {
          const Utterance t = load(*by_id.at(pair.target_id));
          const Utterance i = load(*by_id.at(pair.interferer_id));
          const MixResult m = mix_at_snr(t.audio, i.audio, mix_data.snr_db);
          const std::string name = pair.target_id + ".wav";
          write_wav(out / name, m.mixture);
          json line;
          line["id"] = pair.target_id;
          line["interferer"] = pair.interferer_id;
          line["partition"] = to_string(p);
          line["snr_db"] = mix_data.snr_db;
          line["gain"] = m.gain;
          line["mixture_path"] = name;
          list << line.dump() << '\n';
          ++n;
        }
      }
      if (!list) throw Error("failed writing " + (out / "mixes.jsonl").string());
      rec.metrics["mixtures"] = n;
      rec.outputs["list"] = (out / "mixes.jsonl").string();
      std::cout << "wrote " << n << " mixtures to " << out.string() << '\n';
      write_record(record_path(record_arg, out / "run.json"), rec);

    } else if (sub == train) {
      model_cfg.mode = nn::parse_mode(mode_str);
      model_cfg.audio_encoder = nn::parse_audio_encoder(encoder_str);
      train_cfg.loss_kind = parse_loss_kind(loss_str);
      train_cfg.seed = model_cfg.seed;
      rec.seeds["model"] = model_cfg.seed;
      rec.seeds["mix"] = train_data.mix_seed;
      const auto train_utts = train_data.load(Partition::Train, max_train_utts);
      const auto val_utts = train_data.load(Partition::Val, max_val_utts);
      const auto train_segs = collect_segments(train_utts);
      const auto val_segs = collect_segments(val_utts);
      std::cout << "training on " << train_segs.size() << " segments, validating on " << val_segs.size() << '\n';
      nn::Network net(model_cfg);
      const auto result = nn::train(net, train_segs, val_segs, train_cfg, [](const nn::EpochRecord& e) {
        std::cout << "epoch " << e.epoch << "  train " << e.train_loss << "  val " << e.val_loss << std::endl;
      });
      const fs::path ckpt(ckpt_out);
      if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
      nn::write_checkpoint(ckpt, nn::make_checkpoint(net, train_cfg.loss_kind, train_cfg.alpha, result.adam));
      const fs::path history = fs::path(ckpt_out + ".history.csv");
      nn::write_history_csv(history, result.history);
      rec.metrics["best_epoch"] = result.best_epoch;
      rec.metrics["best_val_loss"] = result.history.at(static_cast<std::size_t>(result.best_epoch)).val_loss;
      rec.metrics["epochs_run"] = result.history.size();
      rec.metrics["train_segments"] = train_segs.size();
      rec.metrics["parameters"] = net.parameter_count();
      rec.metrics["seconds"] = seconds_since(t0);
      rec.outputs["checkpoint"] = ckpt.string();
      rec.outputs["history"] = history.string();
      write_record(record_path(record_arg, fs::path(ckpt_out + ".run.json")), rec);

    } else if (sub == enh) {
      const nn::Network net = nn::network_from(nn::read_checkpoint(enh_ckpt));
      const Waveform noisy = read_wav(enh_wav);
      VideoClip video;
      if (!enh_video.empty()) video = read_gvf(enh_video);
      const Waveform out = enhance(net, noisy, enh_video.empty() ? nullptr : &video);
      write_wav(enh_out, out);
      rec.metrics["samples"] = out.size();
      rec.outputs["wav"] = enh_out;
      write_record(record_path(record_arg, fs::path(enh_out + ".run.json")), rec);

    } else if (sub == eval) {
      rec.seeds["mix"] = eval_data.mix_seed;
      const auto test = eval_data.load(Partition::Test);
      std::vector<EvalRow> rows;
      for (const auto& path : eval_ckpts) {
        const auto ck = nn::read_checkpoint(path);
        const nn::Network net = nn::network_from(ck);
        const auto s = evaluate_model(net, test);
        rows.push_back({model_name(path), std::string(to_string(ck.loss_kind)), std::string(nn::to_string(ck.config.mode)),
                        s.snr_db_mean, s.mask_mae_mean});
      }
      const auto oracle = evaluate_oracle(test);
      const auto mixture = evaluate_mixture(test);
      rows.push_back({"oracle", "-", "-", oracle.snr_db_mean, oracle.mask_mae_mean});
      rows.push_back({"mixture", "-", "-", mixture.snr_db_mean, mixture.mask_mae_mean});
      write_eval_csv(eval_out, rows);
      json m = json::array();
      for (const auto& r : rows) {
        m.push_back({{"model", r.model}, {"loss", r.loss}, {"mode", r.mode}, {"snr_db", r.snr_db_mean},
                     {"mask_mae", r.mask_mae_mean}});
        std::cout << r.model << '\t' << r.loss << '\t' << r.mode << "\tSNR " << r.snr_db_mean << " dB\tMAE "
                  << r.mask_mae_mean << '\n';
      }
      rec.metrics["rows"] = m;
      rec.metrics["test_utterances"] = test.size();
      rec.outputs["csv"] = eval_out;
      write_record(record_path(record_arg, fs::path(eval_out + ".run.json")), rec);

    } else if (sub == vis) {
      rec.seeds["mix"] = vis_data.mix_seed;
      const auto test = vis_data.load(Partition::Test);
      const nn::Network net_a = nn::network_from(nn::read_checkpoint(vis_a));
      const nn::Network net_av = nn::network_from(nn::read_checkpoint(vis_av));
      if (net_a.config().mode != nn::Mode::A) throw Error(vis_a + " is not an audio-only model");
      if (net_av.config().mode != nn::Mode::AV) throw Error(vis_av + " is not an audio-visual model");
      const auto report = build_report(model_eval(net_a, test), model_eval(net_av, test));
      const std::string svg = vis_svg.empty() ? fs::path(vis_csv).replace_extension(".svg").string() : vis_svg;
      write_report_csv(vis_csv, report);
      write_report_svg(svg, report);
      json m = json::array();
      for (const auto& r : report) {
        m.push_back({{"viseme", viseme_name(r.viseme)}, {"frames", r.frames}, {"pct_delta", r.percent_delta}});
        std::cout << viseme_name(r.viseme) << '\t' << r.frames << '\t' << round1(r.percent_delta) << "%\n";
      }
      rec.metrics["visemes"] = m;
      rec.outputs["csv"] = vis_csv;
      rec.outputs["svg"] = svg;
      write_record(record_path(record_arg, fs::path(vis_csv + ".run.json")), rec);

    } else if (sub == probe) {
      rec.seeds["mix"] = probe_data.mix_seed;
      rec.seeds["probe"] = probe_seed;
      const nn::Network net = nn::network_from(nn::read_checkpoint(probe_ckpt));
      const auto test = probe_data.load(Partition::Test);
      const auto segments = collect_segments(test);
      const auto examples = extract_embeddings(net, segments);
      const ProbeSplit split = probe_split(examples, probe_seed);
      const TuneResult tuned = tune_C(split.train, split.val, c_grid, logreg_opts);
      const RecallReport report = recall_report(tuned.model, split.test);
      write_recall_csv(probe_out, report);
      for (const auto& r : report.rows)
        std::cout << viseme_name(r.viseme) << '\t' << r.support << '\t' << round1(r.recall_pct) << "%\n";
      std::cout << "average " << round1(report.average_pct) << "%  chance " << report.chance_pct << "%  C "
                << tuned.best_C << '\n';
      rec.metrics["best_C"] = tuned.best_C;
      rec.metrics["val_uar"] = tuned.best_val_uar;
      rec.metrics["average_recall_pct"] = report.average_pct;
      rec.metrics["chance_pct"] = report.chance_pct;
      json per = json::object();
      for (const auto& r : report.rows) per[std::string(viseme_name(r.viseme))] = r.recall_pct;
      rec.metrics["recall_pct"] = per;
      rec.outputs["csv"] = probe_out;
      write_record(record_path(record_arg, fs::path(probe_out + ".run.json")), rec);

    } else if (sub == gc) {
      gc_cfg.mode = nn::parse_mode(gc_mode);
      gc_cfg.audio_encoder = nn::parse_audio_encoder(gc_encoder);
      gc_cfg.seed = gc_opts.seed;
      gc_opts.loss = parse_loss_kind(gc_loss);
      rec.seeds["model"] = gc_opts.seed;
      const nn::Network net(gc_cfg);
      const AvSegment segment = synthetic_segment(gc_opts.seed);
      const auto r = nn::gradient_check(net, segment, gc_opts);
      const bool ok = r.max_relative_error <= kGradTolerance;
      std::cout << "max relative error " << r.max_relative_error << " over " << r.checked << " parameters (worst "
                << r.worst_parameter << ")\n"
                << (ok ? "PASS" : "FAIL") << '\n';
      rec.metrics["max_relative_error"] = r.max_relative_error;
      rec.metrics["checked"] = r.checked;
      rec.metrics["worst_parameter"] = r.worst_parameter;
      rec.metrics["pass"] = ok;
      write_record(record_path(record_arg, fs::path("gradcheck.run.json")), rec);
      return ok ? 0 : 1;
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "avse " << app.get_subcommands().front()->get_name() << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace avse::cli
