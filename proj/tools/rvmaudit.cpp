// rvmaudit command-line front end.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rvmaudit/rvmaudit.hpp"

namespace fs = std::filesystem;
using namespace rvm;

namespace {

struct PipelineFlags {
  std::string variant;
  int lower = 0;
  std::optional<int> upper;
  bool binarize = false;
  bool skeletonize = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--variant", variant, "grayscale | binarized | skeletonized");
    cmd->add_option("--lower", lower, "keep PIVs >= lower (0..256)");
    cmd->add_option("--upper", upper, "keep PIVs <= upper (0..255)");
    cmd->add_flag("--binarize", binarize, "map surviving pixels to 255");
    cmd->add_flag("--skeletonize", skeletonize, "thin to one-pixel centrelines (needs --binarize)");
  }

  [[nodiscard]] TransformPipeline pipeline() const {
    TransformPipeline p;
    if (!variant.empty()) {
      if (binarize || skeletonize) throw ConfigError("--variant cannot be combined with --binarize/--skeletonize");
      p = TransformPipeline::of(parse_variant(variant), {});
    } else {
      p.binarize = binarize;
      p.skeletonize = skeletonize;
    }
    p.threshold = {lower, upper};
    try {
      p.threshold.validate();
    } catch (const ConfigError&) {
      throw;
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
    p.validate();
    return p;
  }
};

// Training flags that override the config file.
struct TrainFlags {
  std::optional<int> epochs, patience, batch_size, input_size;
  std::optional<double> lr, adam_lr;
  std::optional<std::string> optimizer, select_on;
  std::optional<std::uint64_t> seed;
  bool weighted = false;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "maximum epochs");
    cmd->add_option("--patience", patience, "early-stopping patience");
    cmd->add_option("--batch-size", batch_size, "mini-batch size");
    cmd->add_option("--input-size", input_size, "model input side length");
    cmd->add_option("--lr", lr, "SGD learning rate");
    cmd->add_option("--adam-lr", adam_lr, "Adam learning rate");
    cmd->add_option("--optimizer", optimizer, "sgd | adam");
    cmd->add_option("--select-on", select_on, "loss | auc_roc");
    cmd->add_option("--seed", seed, "training seed");
    cmd->add_flag("--weighted-sampling", weighted, "class-balanced sampling");
  }

  void apply(TrainConfig& c) const {
    if (epochs) c.max_epochs = *epochs;
    if (patience) c.patience = *patience;
    if (batch_size) c.batch_size = *batch_size;
    if (input_size) c.input_size = *input_size;
    if (lr) c.lr = *lr;
    if (adam_lr) c.adam_lr = *adam_lr;
    if (optimizer) c.optimizer = parse_optimizer(*optimizer, "--optimizer");
    if (select_on) c.select_on = parse_select_on(*select_on, "--select-on");
    if (seed) c.seed = *seed;
    if (weighted) c.weighted_sampling = true;
  }
};

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
}

void validate_train(const TrainConfig& c) {
  try {
    c.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("train: ") + e.what());
  }
}

SplitRatios parse_ratios(const std::vector<double>& v) {
  if (v.size() != 3) throw ConfigError("--ratios: expected three values");
  return {v[0], v[1], v[2]};
}

Manifest transformed_manifest(const Manifest& m, const TransformPipeline& pipe, const fs::path& out_dir) {
  Manifest out = m;
  out.base_dir = out_dir;
  const bool identity = pipe.threshold.lower == 0 && !pipe.threshold.upper && !pipe.binarize;
  for (auto& s : out.subjects)
    for (auto& path : s.image_paths) {
      fs::path rel(path);
      if (rel.is_absolute()) rel = rel.filename();
      rel.replace_extension(".pgm");
      const fs::path src = m.resolve(path);
      const fs::path dst = out_dir / rel;
      ensure_dir(dst.parent_path());
      if (identity) {
        // Grayscale at threshold 0 is the identity: copy bytes verbatim
        // once the file has been checked to be a valid P5.
        read_gray(src);
        fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
      } else {
        write_gray(pipe.apply(read_gray(src)), dst);
      }
      path = rel.generic_string();
    }
  write_manifest(out, out_dir / "manifest.csv");
  return out;
}

Dataset partition_dataset(const std::vector<CohortImage>& images, const TransformPipeline& pipe, Partition p,
                          int input_size, std::vector<const CohortImage*>* refs = nullptr) {
  Dataset d;
  for (const auto& ci : images) {
    if (ci.partition != p) continue;
    d.images.push_back(model_input(pipe.apply(ci.image), input_size));
    d.labels.push_back(ci.label);
    if (refs) refs->push_back(&ci);
  }
  return d;
}

void write_level_reports(const PredictionSet& preds, const fs::path& out_dir, const std::string& stem,
                         std::ostream& log) {
  Json j;
  for (Level level : {Level::Image, Level::Subject}) {
    const auto set = level == Level::Image ? preds : aggregate_subjects(preds);
    const auto r = curves(set, level);
    j[to_string(level)] = to_json(r);
    const std::string name = stem + "_" + to_string(level);
    write_text(out_dir / (name + "_pr.svg"), pr_svg(r, name + " PR"));
    write_text(out_dir / (name + "_roc.svg"), roc_svg(r, name + " ROC"));
    std::ofstream csv(out_dir / (name + ".csv"), std::ios::binary | std::ios::trunc);
    write_curve_csv(r, csv);
    log << to_string(level) << ": auc_pr=" << r.auc_pr << " auc_roc=" << r.auc_roc
        << " prevalence=" << r.prevalence << " (" << r.n_pos << " pos / " << r.n_neg << " neg)\n";
  }
  write_json_file(j, out_dir / "metrics.json");
}

void write_covariate_balance(const Manifest& m, const SplitAssignment& s, std::ostream& out) {
  out << "covariate,partition_a,partition_b,mean_a,mean_b,t,df,p\n";
  out.precision(10);
  const Partition parts[3] = {Partition::Train, Partition::Validation, Partition::Test};
  auto values = [&](Partition p, double SubjectRecord::*field) {
    std::vector<double> v;
    for (const auto* subj : s.subjects(m, p)) v.push_back(subj->*field);
    return v;
  };
  auto mean = [](const std::vector<double>& v) {
    double t = 0;
    for (double x : v) t += x;
    return v.empty() ? 0.0 : t / v.size();
  };
  const std::pair<const char*, double SubjectRecord::*> covs[3] = {
      {"bw", &SubjectRecord::bw}, {"ga", &SubjectRecord::ga}, {"pma", &SubjectRecord::pma}};
  for (const auto& [name, field] : covs)
    for (int a = 0; a < 3; ++a)
      for (int b = a + 1; b < 3; ++b) {
        const auto va = values(parts[a], field);
        const auto vb = values(parts[b], field);
        out << name << ',' << to_string(parts[a]) << ',' << to_string(parts[b]) << ',' << mean(va) << ','
            << mean(vb) << ',';
        try {
          const auto w = welch_t(va, vb);
          out << w.t << ',' << w.df << ',' << w.p << '\n';
        } catch (const SampleTooSmallError&) {
          out << ",,\n";
        }
      }
}

int cmd_synth(const fs::path& spec_path, const fs::path& out_dir, std::optional<std::uint64_t> seed) {
  auto spec = cohort_spec_from_json(load_json_file(spec_path));
  if (seed) spec.seed = *seed;
  const auto cohort = gen_cohort(spec, out_dir);
  write_json_file(to_json(spec), out_dir / "spec.json");
  std::size_t per_group[2] = {0, 0};
  for (const auto& s : cohort.rvm.subjects) per_group[s.group == spec.groups[0] ? 0 : 1] += s.image_paths.size();
  std::cout << "subjects: " << cohort.rvm.subjects.size() << " (" << spec.groups[0] << " " << spec.n_subjects[0]
            << ", " << spec.groups[1] << " " << spec.n_subjects[1] << ")\n"
            << "images: " << cohort.rvm.image_count() << " (" << per_group[0] << " / " << per_group[1] << ")\n"
            << "manifest: " << (out_dir / "manifest.csv").string() << "\n"
            << "rfi manifest: " << (out_dir / "manifest_rfi.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribute-leakage audits for retinal vessel maps"};
  app.require_subcommand(1);
  std::vector<std::string> groups;
  app.add_option("--groups", groups, "group labels, positive class first (default Black,White)")
      ->delimiter(',');

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic cohort");
  fs::path synth_spec, synth_out;
  std::optional<std::uint64_t> synth_seed;
  synth->add_option("spec", synth_spec, "cohort spec JSON")->required();
  synth->add_option("out_dir", synth_out, "output directory")->required();
  synth->add_option("--seed", synth_seed, "override the spec seed");

  // transform
  auto* transform = app.add_subcommand("transform", "threshold / binarize / skeletonize a manifest's images");
  fs::path tr_manifest, tr_out;
  PipelineFlags tr_pipe;
  transform->add_option("manifest", tr_manifest, "input manifest CSV")->required();
  transform->add_option("out_dir", tr_out, "output directory")->required();
  tr_pipe.add_to(transform);

  // split
  auto* split_cmd = app.add_subcommand("split", "subject-exclusive train/validation/test split");
  fs::path sp_manifest, sp_out;
  std::vector<double> sp_ratios = {0.5, 0.2, 0.3};
  std::uint64_t sp_seed = 0;
  split_cmd->add_option("manifest", sp_manifest, "manifest CSV")->required();
  split_cmd->add_option("out", sp_out, "split CSV to write")->required();
  split_cmd->add_option("--ratios", sp_ratios, "train,validation,test")->delimiter(',');
  split_cmd->add_option("--seed", sp_seed, "split seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "train one classifier");
  fs::path tn_manifest, tn_out, tn_split, tn_config;
  PipelineFlags tn_pipe;
  TrainFlags tn_flags;
  std::vector<double> tn_ratios = {0.5, 0.2, 0.3};
  std::uint64_t tn_split_seed = 0;
  train_cmd->add_option("manifest", tn_manifest, "manifest CSV")->required();
  train_cmd->add_option("out_dir", tn_out, "output directory")->required();
  train_cmd->add_option("--split", tn_split, "split CSV (computed when omitted)");
  train_cmd->add_option("--ratios", tn_ratios, "split ratios when computing a split")->delimiter(',');
  train_cmd->add_option("--split-seed", tn_split_seed, "split seed when computing a split");
  train_cmd->add_option("--config", tn_config, "training config JSON");
  tn_pipe.add_to(train_cmd);
  tn_flags.add_to(train_cmd);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "score a checkpoint on one partition");
  fs::path ev_manifest, ev_split, ev_ckpt, ev_out;
  std::string ev_partition = "test";
  PipelineFlags ev_pipe;
  eval_cmd->add_option("manifest", ev_manifest, "manifest CSV")->required();
  eval_cmd->add_option("split", ev_split, "split CSV")->required();
  eval_cmd->add_option("checkpoint", ev_ckpt, "model checkpoint")->required();
  eval_cmd->add_option("out_dir", ev_out, "output directory")->required();
  eval_cmd->add_option("--partition", ev_partition, "train | validation | test");
  ev_pipe.add_to(eval_cmd);

  // audit
  auto* audit_cmd = app.add_subcommand("audit", "run a full threshold-ladder audit");
  fs::path au_manifest, au_out, au_plan, au_config, au_rfi;
  TrainFlags au_flags;
  std::optional<int> au_concurrency;
  std::optional<std::uint64_t> au_split_seed;
  bool au_no_checkpoints = false;
  audit_cmd->add_option("manifest", au_manifest, "manifest CSV")->required();
  audit_cmd->add_option("out_dir", au_out, "output directory")->required();
  audit_cmd->add_option("--plan", au_plan, "plan JSON (default: full 39-entry ladder)");
  audit_cmd->add_option("--config", au_config, "audit config JSON");
  audit_cmd->add_option("--rfi-manifest", au_rfi, "colour manifest for channel histograms");
  audit_cmd->add_option("--concurrency", au_concurrency, "entries trained in parallel");
  audit_cmd->add_option("--split-seed", au_split_seed, "split seed");
  audit_cmd->add_flag("--no-checkpoints", au_no_checkpoints, "skip writing checkpoints");
  au_flags.add_to(audit_cmd);

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "covariate balance, pixel counts and channel histograms");
  fs::path st_manifest, st_out, st_split, st_rfi;
  stats_cmd->add_option("manifest", st_manifest, "manifest CSV")->required();
  stats_cmd->add_option("out_dir", st_out, "output directory")->required();
  stats_cmd->add_option("--split", st_split, "split CSV for covariate balance");
  stats_cmd->add_option("--rfi-manifest", st_rfi, "colour manifest for channel histograms");

  // report
  auto* report_cmd = app.add_subcommand("report", "metrics and curves from a predictions CSV");
  fs::path rp_preds, rp_out;
  std::string rp_title = "predictions";
  report_cmd->add_option("predictions", rp_preds, "predictions CSV")->required();
  report_cmd->add_option("out_dir", rp_out, "output directory")->required();
  report_cmd->add_option("--title", rp_title, "chart title / file stem");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const auto group_list = groups.empty() ? Manifest{}.groups : groups;
  try {
    if (*synth) return cmd_synth(synth_spec, synth_out, synth_seed);

    if (*transform) {
      const auto pipe = tr_pipe.pipeline();
      const auto m = load_manifest(tr_manifest, group_list);
      ensure_dir(tr_out);
      const auto out = transformed_manifest(m, pipe, tr_out);
      std::cout << "images: " << out.image_count() << "\nmanifest: " << (tr_out / "manifest.csv").string() << "\n";
      return 0;
    }

    if (*split_cmd) {
      const auto ratios = parse_ratios(sp_ratios);
      const auto m = load_manifest(sp_manifest, group_list);
      const auto s = split(m, ratios, sp_seed);
      if (sp_out.has_parent_path()) ensure_dir(sp_out.parent_path());
      write_split(s, m, sp_out);
      for (Partition p : {Partition::Train, Partition::Validation, Partition::Test}) {
        std::cout << to_string(p) << ':';
        for (const auto& g : m.groups) {
          std::size_t n = 0;
          for (const auto* subj : s.subjects(m, p)) n += subj->group == g;
          std::cout << ' ' << g << '=' << n;
        }
        std::cout << '\n';
      }
      write_covariate_balance(m, s, std::cout);
      return 0;
    }

    if (*train_cmd) {
      TrainConfig cfg;
      if (!tn_config.empty()) cfg = train_config_from_json(load_json_file(tn_config), cfg, "train");
      tn_flags.apply(cfg);
      validate_train(cfg);
      const auto pipe = tn_pipe.pipeline();
      const auto m = load_manifest(tn_manifest, group_list);
      const auto s = tn_split.empty() ? split(m, parse_ratios(tn_ratios), tn_split_seed) : read_split(tn_split);
      ensure_dir(tn_out);
      write_json_file(to_json(cfg), tn_out / "effective_config.json");
      if (tn_split.empty()) write_split(s, m, tn_out / "split.csv");
      const auto images = load_cohort_images(m, s);
      const auto tr = partition_dataset(images, pipe, Partition::Train, cfg.input_size);
      const auto va = partition_dataset(images, pipe, Partition::Validation, cfg.input_size);
      const auto result = train(tr, va, cfg);
      save_checkpoint(result.params, tn_out / "model.ckpt");
      std::ofstream log(tn_out / "train_log.csv", std::ios::binary | std::ios::trunc);
      write_train_report_csv(result.report, log);
      const auto& best = result.report.epochs[result.report.best_epoch - 1];
      std::cout << "epochs: " << result.report.epochs.size() << " (" << to_string(result.report.stop_reason)
                << ")\nbest epoch: " << result.report.best_epoch << " val_loss=" << best.val_loss
                << " val_auc_roc=" << best.val_auc_roc << "\ncheckpoint: " << (tn_out / "model.ckpt").string()
                << "\n";
      return 0;
    }

    if (*eval_cmd) {
      const auto pipe = ev_pipe.pipeline();
      Partition part;
      try {
        part = parse_partition(ev_partition);
      } catch (const Error& e) {
        throw ConfigError(std::string("--partition: ") + e.what());
      }
      const auto params = load_checkpoint(ev_ckpt);
      const auto m = load_manifest(ev_manifest, group_list);
      const auto s = read_split(ev_split);
      const auto images = load_cohort_images(m, s);
      std::vector<const CohortImage*> refs;
      const auto d = partition_dataset(images, pipe, part, params.arch.input_size, &refs);
      if (d.size() == 0) throw Error("partition '" + ev_partition + "' is empty");
      const auto preds = predict(params, d, refs);
      ensure_dir(ev_out);
      std::ofstream pc(ev_out / "predictions.csv", std::ios::binary | std::ios::trunc);
      write_predictions_csv(preds, pc);
      write_level_reports(preds, ev_out, ev_partition, std::cout);
      return 0;
    }

    if (*audit_cmd) {
      AuditConfig cfg;
      if (!au_config.empty()) cfg = audit_config_from_json(load_json_file(au_config), cfg);
      au_flags.apply(cfg.train);
      if (au_concurrency) cfg.concurrency = *au_concurrency;
      if (au_split_seed) cfg.split_seed = *au_split_seed;
      if (au_no_checkpoints) cfg.checkpoints = false;
      if (cfg.concurrency < 1) throw ConfigError("--concurrency: must be >= 1");
      validate_train(cfg.train);
      const auto plan = au_plan.empty() ? AuditPlan::default_ladder() : plan_from_json(load_json_file(au_plan));
      const auto m = load_manifest(au_manifest, group_list);
      std::optional<Manifest> rfi;
      if (!au_rfi.empty()) rfi = load_manifest(au_rfi, group_list);
      ensure_dir(au_out);
      const auto res = run_audit(m, plan, cfg, au_out, rfi ? &*rfi : nullptr);
      std::size_t aborted = 0;
      for (const auto& r : res.records) {
        if (!r.ok) {
          ++aborted;
          std::cout << r.entry << ": aborted: " << r.error << "\n";
          continue;
        }
        std::cout << r.entry << ": image auc_pr=" << r.image.auc_pr << " auc_roc=" << r.image.auc_roc
                  << " | subject auc_pr=" << r.subject.auc_pr << " auc_roc=" << r.subject.auc_roc << "\n";
      }
      std::cout << "results: " << (au_out / "results.csv").string() << " (" << res.records.size() - aborted
                << " entries, " << aborted << " aborted)\n";
      return aborted == res.records.size() ? 1 : 0;
    }

    if (*stats_cmd) {
      const auto m = load_manifest(st_manifest, group_list);
      ensure_dir(st_out);
      std::vector<LabeledImage> labeled;
      for (const auto& subj : m.subjects)
        for (const auto& p : subj.image_paths) labeled.push_back({subj.group, read_gray(m.resolve(p))});
      RunRecord raw;
      raw.entry = "raw";
      raw.ok = true;
      raw.pixel_counts = pixel_count_stats(labeled);
      {
        std::ofstream out(st_out / "pixel_counts.csv", std::ios::binary | std::ios::trunc);
        write_pixel_count_csv({raw}, m.groups, out);
      }
      for (const auto& [g, s] : raw.pixel_counts.summary)
        std::cout << g << ": images=" << s.images << " mean_nnz=" << s.mean << " sd=" << s.sd << "\n";
      if (!st_split.empty()) {
        std::ofstream out(st_out / "covariates.csv", std::ios::binary | std::ios::trunc);
        write_covariate_balance(m, read_split(st_split), out);
      }
      if (!st_rfi.empty()) {
        const auto rfi = load_manifest(st_rfi, group_list);
        std::ofstream out(st_out / "channel_histograms.csv", std::ios::binary | std::ios::trunc);
        write_channel_histogram_csv(rfi, out);
      }
      return 0;
    }

    if (*report_cmd) {
      const auto preds = read_predictions_csv(rp_preds);
      ensure_dir(rp_out);
      write_level_reports(preds, rp_out, rp_title, std::cout);
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
