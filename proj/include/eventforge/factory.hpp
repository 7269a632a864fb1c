#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eventforge/config.hpp"
#include "eventforge/core.hpp"
#include "eventforge/distill.hpp"
#include "eventforge/event_sim.hpp"
#include "eventforge/io.hpp"
#include "eventforge/metrics.hpp"
#include "eventforge/repr.hpp"

namespace eventforge {
namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

// Runs fn(0..count-1) on `workers` threads; first exception wins.
template <typename Fn>
void run_jobs(int workers, int count, Fn&& fn) {
  workers = std::max(1, std::min(workers, count));
  if (workers == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    while (true) {
      const int i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

struct SampleRecord {
  std::string dir_name;
  int sample = 0;
  int baseline_index = 0;
  double baseline = 0.0;
  double fx = 0.0;
  uint64_t seed = 0;
  double dtau = 0.0;
  uint64_t t_span_us = 0;
  uint64_t events_left = 0;
  uint64_t events_right = 0;
  std::vector<std::string> files;

  std::string manifest_line() const {
    std::ostringstream out;
    out << dir_name << " sample=" << sample
        << " baseline_index=" << baseline_index
        << " baseline=" << detail::fmt_double(baseline)
        << " fx=" << detail::fmt_double(fx) << " seed=" << seed
        << " dtau=" << detail::fmt_double(dtau) << " t_span_us=" << t_span_us
        << " events_left=" << events_left << " events_right=" << events_right
        << " files=";
    for (size_t i = 0; i < files.size(); ++i)
      out << files[i] << (i + 1 < files.size() ? "," : "");
    return out.str();
  }

  static SampleRecord parse_manifest_line(const std::string& line,
                                          int line_no) {
    std::istringstream ss(line);
    SampleRecord rec;
    if (!(ss >> rec.dir_name))
      throw DataError("manifest:" + std::to_string(line_no) + ": empty line");
    std::string token;
    while (ss >> token) {
      const size_t eq = token.find('=');
      if (eq == std::string::npos)
        throw DataError("manifest:" + std::to_string(line_no) +
                        ": expected key=value, got '" + token + "'");
      const std::string key = token.substr(0, eq);
      const std::string value = token.substr(eq + 1);
      try {
        if (key == "sample") rec.sample = std::stoi(value);
        else if (key == "baseline_index") rec.baseline_index = std::stoi(value);
        else if (key == "baseline") rec.baseline = std::stod(value);
        else if (key == "fx") rec.fx = std::stod(value);
        else if (key == "seed") rec.seed = std::stoull(value);
        else if (key == "dtau") rec.dtau = std::stod(value);
        else if (key == "t_span_us") rec.t_span_us = std::stoull(value);
        else if (key == "events_left") rec.events_left = std::stoull(value);
        else if (key == "events_right") rec.events_right = std::stoull(value);
        else if (key == "files") {
          std::istringstream fs(value);
          std::string f;
          while (std::getline(fs, f, ','))
            if (!f.empty()) rec.files.push_back(f);
        } else {
          throw DataError("manifest:" + std::to_string(line_no) +
                          ": unknown key '" + key + "'");
        }
      } catch (const std::invalid_argument&) {
        throw DataError("manifest:" + std::to_string(line_no) +
                        ": bad value for '" + key + "'");
      } catch (const std::out_of_range&) {
        throw DataError("manifest:" + std::to_string(line_no) +
                        ": bad value for '" + key + "'");
      }
    }
    return rec;
  }
};

struct GenerateResult {
  std::string out_dir;
  std::string manifest_path;
  std::vector<SampleRecord> records;
};

// One dataset sample per (sample index, baseline index) pair, flat-numbered
// sample-major. Each directory holds the stereo event streams plus the final
// keyframe's labels and RGB triplet; manifest rows are written in job order
// once all workers finish.
inline GenerateResult generate_dataset(const FactoryConfig& cfg) {
  if (cfg.samples < 1)
    throw UsageError(
        "generate: sample count required (set --samples or [output] samples)");
  if (cfg.baselines.empty()) throw UsageError("generate: no baselines");

  const SparseVoxelScene scene = cfg.build_scene();
  const int num_jobs = cfg.samples * static_cast<int>(cfg.baselines.size());
  std::filesystem::create_directories(cfg.out_dir);

  GenerateResult result;
  result.out_dir = cfg.out_dir;
  result.records.resize(num_jobs);
  std::mutex record_mutex;

  detail::run_jobs(cfg.workers, num_jobs, [&](int job) {
    const int sample = job / static_cast<int>(cfg.baselines.size());
    const int b_idx = job % static_cast<int>(cfg.baselines.size());

    StereoRig rig;
    rig.camera = cfg.camera;
    rig.baseline = cfg.baselines[b_idx];
    SimOptions sim = cfg.sim;
    sim.seed = derive_seed(cfg.seed, static_cast<uint64_t>(job) + 1);

    const StereoSimResult sim_result =
        simulate_stereo(scene, cfg.trajectory, rig, sim);
    if (sim_result.keyframes.empty())
      throw DataError("generate: no keyframes produced");
    const Keyframe& kf = sim_result.keyframes.back();

    char name[32];
    std::snprintf(name, sizeof(name), "sample_%04d", job);
    const std::filesystem::path dir =
        std::filesystem::path(cfg.out_dir) / name;
    std::filesystem::create_directories(dir);

    SampleRecord rec;
    rec.dir_name = name;
    rec.sample = sample;
    rec.baseline_index = b_idx;
    rec.baseline = rig.baseline;
    rec.fx = rig.camera.fx;
    rec.seed = sim.seed;
    rec.dtau = sim.dtau;
    rec.t_span_us = sim.t_span_us;
    rec.events_left = sim_result.left.events.size();
    rec.events_right = sim_result.right.events.size();

    write_evt1((dir / "left.evt1").string(), sim_result.left);
    write_evt1((dir / "right.evt1").string(), sim_result.right);
    write_pfm((dir / "depth.pfm").string(), kf.depth);
    write_pfm((dir / "disparity.pfm").string(), kf.disparity);
    write_pfm((dir / "conf_ao.pfm").string(), kf.conf_ao);
    write_pfm((dir / "conf_vsize.pfm").string(), kf.conf_vsize);
    write_ppm((dir / "i_ll.ppm").string(), kf.i_ll);
    write_ppm((dir / "i_l.ppm").string(), kf.i_l);
    write_ppm((dir / "i_r.ppm").string(), kf.i_r);
    rec.files = {"left.evt1",    "right.evt1",  "depth.pfm",
                 "disparity.pfm", "conf_ao.pfm", "conf_vsize.pfm",
                 "i_ll.ppm",     "i_l.ppm",     "i_r.ppm"};

    std::lock_guard<std::mutex> lock(record_mutex);
    result.records[job] = std::move(rec);
    EVF_LOG_INFO("generate: wrote %s (%zu / %zu events)", name,
                 static_cast<size_t>(result.records[job].events_left),
                 static_cast<size_t>(result.records[job].events_right));
  });

  result.manifest_path =
      (std::filesystem::path(cfg.out_dir) / "manifest.txt").string();
  std::ostringstream manifest;
  for (const SampleRecord& rec : result.records)
    manifest << rec.manifest_line() << "\n";
  detail::write_file(result.manifest_path, manifest.str());
  return result;
}

struct ValidationIssue {
  std::string where;
  std::string what;
};

struct ValidationReport {
  int samples_checked = 0;
  std::vector<ValidationIssue> issues;
  bool ok() const { return issues.empty(); }
};

// Checks manifest completeness in both directions, re-validates every event
// stream, the disparity/depth relation, and confidence ranges.
inline ValidationReport validate_dataset(const std::string& dir) {
  namespace fs = std::filesystem;
  ValidationReport report;
  auto issue = [&](const std::string& where, const std::string& what) {
    report.issues.push_back({where, what});
  };

  const fs::path root(dir);
  const fs::path manifest_path = root / "manifest.txt";
  if (!fs::exists(manifest_path)) {
    issue("manifest.txt", "missing");
    return report;
  }

  std::vector<SampleRecord> records;
  {
    std::ifstream f(manifest_path);
    std::string line;
    int line_no = 0;
    while (std::getline(f, line)) {
      ++line_no;
      if (line.empty()) continue;
      try {
        records.push_back(SampleRecord::parse_manifest_line(line, line_no));
      } catch (const DataError& e) {
        issue("manifest.txt", e.what());
      }
    }
  }

  std::set<std::string> expected{"manifest.txt"};
  for (const SampleRecord& rec : records)
    for (const std::string& f : rec.files)
      expected.insert(rec.dir_name + "/" + f);

  std::set<std::string> on_disk;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file())
      on_disk.insert(fs::relative(entry.path(), root).generic_string());

  for (const std::string& f : expected)
    if (!on_disk.count(f)) issue(f, "listed in manifest but missing on disk");
  for (const std::string& f : on_disk)
    if (!expected.count(f)) issue(f, "on disk but not in manifest");

  for (const SampleRecord& rec : records) {
    const fs::path sdir = root / rec.dir_name;
    ++report.samples_checked;
    EventStream left, right;
    GridD depth, disparity;
    try {
      left = read_evt1((sdir / "left.evt1").string());
      right = read_evt1((sdir / "right.evt1").string());
      depth = read_pfm((sdir / "depth.pfm").string());
      disparity = read_pfm((sdir / "disparity.pfm").string());
      const GridD conf_ao = read_pfm((sdir / "conf_ao.pfm").string());
      const GridD conf_vsize = read_pfm((sdir / "conf_vsize.pfm").string());
      for (const GridD* conf : {&conf_ao, &conf_vsize})
        for (double v : conf->data())
          if (!(v >= 0.0 && v <= 1.0)) {
            issue(rec.dir_name, "confidence value outside [0,1]");
            break;
          }
    } catch (const DataError& e) {
      issue(rec.dir_name, e.what());
      continue;
    }

    if (left.events.size() != rec.events_left ||
        right.events.size() != rec.events_right)
      issue(rec.dir_name, "event counts do not match manifest");
    if (left.width != depth.width() || left.height != depth.height())
      issue(rec.dir_name, "event sensor size does not match label maps");

    if (!depth.same_size(disparity)) {
      issue(rec.dir_name, "depth/disparity size mismatch");
      continue;
    }
    bool relation_ok = true, mask_ok = true;
    for (size_t i = 0; i < depth.data().size(); ++i) {
      const double z = depth.data()[i];
      const double d = disparity.data()[i];
      if (is_valid(z) != is_valid(d)) {
        mask_ok = false;
        continue;
      }
      if (!is_valid(z)) continue;
      if (z > kDivEps &&
          std::abs(d - rec.baseline * rec.fx / z) >
              1e-3 * std::max(1.0, std::abs(d)))
        relation_ok = false;
    }
    if (!mask_ok)
      issue(rec.dir_name, "depth/disparity validity masks differ");
    if (!relation_ok)
      issue(rec.dir_name, "disparity does not match baseline*fx/depth");
  }
  return report;
}

struct EvalRow {
  std::string name;
  DisparityMetrics metrics;
};

struct EvalOutput {
  std::vector<EvalRow> rows;
  DisparityMetrics aggregate;
};

inline EvalOutput evaluate_disparity_files(
    const std::vector<std::string>& preds,
    const std::vector<std::string>& gts) {
  if (preds.size() != gts.size() || preds.empty())
    throw UsageError("eval: need matching non-empty --pred/--gt lists");
  EvalOutput out;
  double abs_sum = 0.0;
  double bad1 = 0.0, bad2 = 0.0, bad3 = 0.0;
  size_t total = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const GridD pred = read_pfm(preds[i]);
    const GridD gt = read_pfm(gts[i]);
    if (!pred.same_size(gt))
      throw DataError("eval: size mismatch between " + preds[i] + " and " +
                      gts[i]);
    EvalRow row;
    row.name = std::filesystem::path(preds[i]).filename().string();
    row.metrics = disparity_metrics(pred, gt);
    if (row.metrics.defined) {
      const double n = static_cast<double>(row.metrics.valid_count);
      abs_sum += row.metrics.mae * n;
      bad1 += row.metrics.pe1 * n / 100.0;
      bad2 += row.metrics.pe2 * n / 100.0;
      bad3 += row.metrics.pe3 * n / 100.0;
      total += row.metrics.valid_count;
    }
    out.rows.push_back(std::move(row));
  }
  if (total > 0) {
    out.aggregate.defined = true;
    out.aggregate.valid_count = total;
    out.aggregate.mae = abs_sum / total;
    out.aggregate.pe1 = 100.0 * bad1 / total;
    out.aggregate.pe2 = 100.0 * bad2 / total;
    out.aggregate.pe3 = 100.0 * bad3 / total;
  }
  return out;
}

inline std::string metrics_json_line(const std::string& name,
                                     const DisparityMetrics& m) {
  std::ostringstream out;
  out << "{\"file\":\"" << name << "\",\"defined\":"
      << (m.defined ? "true" : "false");
  if (m.defined)
    out << ",\"mae\":" << detail::fmt_double(m.mae)
        << ",\"pe1\":" << detail::fmt_double(m.pe1)
        << ",\"pe2\":" << detail::fmt_double(m.pe2)
        << ",\"pe3\":" << detail::fmt_double(m.pe3)
        << ",\"valid\":" << m.valid_count;
  out << "}";
  return out.str();
}

inline std::string metrics_json_line(const std::string& name,
                                     const DepthImageMetrics& m) {
  std::ostringstream out;
  out << "{\"file\":\"" << name << "\",\"defined\":"
      << (m.defined ? "true" : "false");
  if (m.defined)
    out << ",\"mae\":" << detail::fmt_double(m.depth_mae)
        << ",\"delta125\":" << detail::fmt_double(m.delta125)
        << ",\"valid\":" << m.valid_count;
  out << ",\"psnr\":" << detail::fmt_double(capped_psnr_db(m.psnr))
      << ",\"ssim\":" << detail::fmt_double(m.ssim) << "}";
  return out.str();
}

// Writes <prefix>.txt (flat key=value) and <prefix>.csv (fixed columns).
inline void write_eval_reports(const EvalOutput& eval,
                               const std::string& prefix) {
  std::ostringstream txt, csv;
  auto emit_txt = [&](const std::string& name, const DisparityMetrics& m) {
    txt << name << ".defined=" << (m.defined ? "true" : "false") << "\n";
    if (!m.defined) return;
    txt << name << ".mae=" << detail::fmt_double(m.mae) << "\n"
        << name << ".pe1=" << detail::fmt_double(m.pe1) << "\n"
        << name << ".pe2=" << detail::fmt_double(m.pe2) << "\n"
        << name << ".pe3=" << detail::fmt_double(m.pe3) << "\n"
        << name << ".valid=" << m.valid_count << "\n";
  };
  csv << "file,mae,pe1,pe2,pe3,valid\n";
  auto emit_csv = [&](const std::string& name, const DisparityMetrics& m) {
    if (!m.defined) {
      csv << name << ",nan,nan,nan,nan,0\n";
      return;
    }
    csv << name << "," << detail::fmt_double(m.mae) << ","
        << detail::fmt_double(m.pe1) << "," << detail::fmt_double(m.pe2) << ","
        << detail::fmt_double(m.pe3) << "," << m.valid_count << "\n";
  };
  for (const EvalRow& row : eval.rows) {
    emit_txt(row.name, row.metrics);
    emit_csv(row.name, row.metrics);
  }
  emit_txt("aggregate", eval.aggregate);
  emit_csv("aggregate", eval.aggregate);
  detail::write_file(prefix + ".txt", txt.str());
  detail::write_file(prefix + ".csv", csv.str());
}

struct DistillFileResult {
  std::string input;
  std::string output;
  bool ok = false;
  std::string error;
};

// Per-file isolation: one bad input does not stop the batch.
inline std::vector<DistillFileResult> distill_files(
    const std::vector<std::string>& inputs, const RigPair& rigs,
    const DistillOptions& options, const std::string& out_dir,
    int workers = 1) {
  if (inputs.empty()) return {};  // no-op batch
  std::filesystem::create_directories(out_dir);
  std::vector<DistillFileResult> results(inputs.size());
  const bool identity = rigs_are_identical(rigs);
  detail::run_jobs(workers, static_cast<int>(inputs.size()), [&](int i) {
    DistillFileResult& res = results[i];
    res.input = inputs[i];
    res.output = (std::filesystem::path(out_dir) /
                  std::filesystem::path(inputs[i]).filename())
                     .string();
    try {
      const GridD d_rgb = read_pfm(inputs[i]);
      const GridD d_event = identity
                                ? identity_transfer(d_rgb)
                                : reproject_labels(d_rgb, rigs, options);
      write_pfm(res.output, d_event);
      res.ok = true;
    } catch (const std::exception& e) {
      res.error = e.what();
    }
  });
  return results;
}

}  // namespace eventforge
