// acdk: corruption, synthetic data, training, evaluation and gradient checks.
//
// Exit codes: 0 success, 1 usage error, 2 runtime error or failed check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "acdk/acdk.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::vector<fs::path> list_images(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw acdk::Error("input directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension();
        if (e.is_regular_file() && (ext == ".ppm" || ext == ".pgm")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw acdk::Error("no .ppm/.pgm images in " + dir.string());
    return files;
}

acdk::CorruptionKind kind_arg(const std::string& tag) {
    auto k = acdk::parse_corruption(tag);
    if (!k) throw UsageError("unknown corruption kind '" + tag + "'");
    return *k;
}

std::pair<int, int> parse_query(const std::string& q) {
    int r = 0, c = 0;
    char comma = 0, extra = 0;
    if (std::sscanf(q.c_str(), "%d%c%d%c", &r, &comma, &c, &extra) != 3 || comma != ',')
        throw UsageError("query must be R,C, got '" + q + "'");
    return {r, c};
}

acdk::DistanceMetric metric_arg(const std::string& s) {
    auto m = acdk::parse_metric(s);
    if (!m) throw UsageError("metric must be euclidean or manhattan, got '" + s + "'");
    return *m;
}

/// Row map upsampled back to pixel resolution.
acdk::ImageBuffer row_heatmap(const acdk::DisparityMap& disparity, int patch, std::pair<int, int> q,
                              acdk::DistanceMetric metric) {
    const acdk::DisparityMap crop = acdk::crop_to_patches(disparity, patch);
    const acdk::PatchGrid grid = acdk::patchify(crop, patch);
    const acdk::DisparityMap row = acdk::sdr_row_map(grid, q.first, q.second, metric);
    acdk::ImageBuffer img(crop.height, crop.width, 1);
    for (int y = 0; y < crop.height; ++y)
        for (int x = 0; x < crop.width; ++x) img.at(y, x, 0) = row.at(y / patch, x / patch);
    return img;
}

// ---------------------------------------------------------------------------

struct CorruptArgs {
    std::string kind;
    int severity = 0;
    std::uint64_t seed = 0;
    std::string in, out;
};

int run_corrupt(const CorruptArgs& a) {
    const acdk::CorruptionKind kind = kind_arg(a.kind);
    const acdk::Severity sev(a.severity);
    fs::create_directories(a.out);
    const acdk::Rng root = acdk::Rng(a.seed).fork("corrupt");
    for (const auto& f : list_images(a.in)) {
        acdk::Rng r = root.fork(f.filename().string());
        const acdk::ImageBuffer img = acdk::load_image(f);
        acdk::save_image(acdk::apply_corruption(kind, img, sev, r), fs::path(a.out) / f.filename());
    }
    return 0;
}

struct ScheduleArgs {
    double p_blur = acdk::tables::kDefaultBlurProbability;
    double p_weather = acdk::tables::kDefaultWeatherProbability;
    std::uint64_t seed = 0;
    std::string in, out, log;
};

int run_schedule(const ScheduleArgs& a) {
    acdk::SchedulerConfig cfg{a.p_blur, a.p_weather, true};
    try {
        cfg.validate();
    } catch (const acdk::InvalidArgument& e) {
        throw UsageError(e.what());
    }
    fs::create_directories(a.out);
    std::ofstream log;
    if (!a.log.empty()) {
        log.open(a.log, std::ios::trunc);
        if (!log) throw acdk::Error("cannot write " + a.log);
    }
    const acdk::Rng root = acdk::Rng(a.seed).fork("schedule");
    for (const auto& f : list_images(a.in)) {
        acdk::Rng r = root.fork(f.filename().string());
        const acdk::ScheduledImage s = acdk::schedule_perturb(acdk::load_image(f), cfg, r);
        acdk::save_image(s.image, fs::path(a.out) / f.filename());
        if (log.is_open()) {
            json kinds = json::array(), sevs = json::array();
            for (const auto& c : s.applied) {
                kinds.push_back(std::string(acdk::to_string(c.kind)));
                sevs.push_back(c.severity);
            }
            log << json{{"file", f.filename().string()}, {"kinds", kinds}, {"severities", sevs}, {"seed", a.seed}}.dump()
                << '\n';
        }
    }
    return 0;
}

struct DatagenArgs {
    int count = 0;
    int size = 64;
    std::uint64_t seed = 0;
    std::string out;
};

int run_datagen(const DatagenArgs& a) {
    if (a.count < 1) throw UsageError("--count must be >= 1");
    if (a.size < 8 || a.size % 8 != 0) throw UsageError("--size must be a positive multiple of 8");
    acdk::generate_dataset(a.count, a.size, a.seed, a.out);
    std::cout << "wrote " << a.count << " scenes to " << a.out << '\n';
    return 0;
}

struct TrainArgs {
    std::string config, data, out, log;
    bool quiet = false;
};

int run_train(const TrainArgs& a) {
    const acdk::TrainConfig cfg = a.config.empty() ? acdk::TrainConfig{} : acdk::load_train_config(a.config);
    std::ofstream log;
    if (!a.log.empty()) {
        log.open(a.log, std::ios::trunc);
        if (!log) throw acdk::Error("cannot write " + a.log);
    }
    const auto reports = acdk::train(cfg, a.data, a.out, log.is_open() ? &log : nullptr, a.quiet ? nullptr : &std::cerr);
    if (!reports.empty()) {
        const auto& r = reports.back();
        std::printf("steps %zu  final L_total %.6f  (L_c %.6f  L_kd %.6f  L_s %.6f)\n", reports.size(), r.loss_total,
                    r.loss_consistency, r.loss_distill, r.loss_sdr);
    } else {
        std::printf("steps 0\n");
    }
    return 0;
}

struct EvalArgs {
    std::string ckpt, data, report, pairs;
    std::vector<std::string> kinds{"dark", "fog", "snow", "motion_blur", "zoom_blur", "contrast", "gaussian_noise"};
    std::vector<int> severities{1, 2, 3, 4, 5};
    std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
    std::vector<acdk::CorruptionKind> kinds;
    for (const auto& k : a.kinds) kinds.push_back(kind_arg(k));
    for (int s : a.severities)
        if (s < 1 || s > 5) throw UsageError("severities must lie in 1..5");
    const acdk::DepthNet model = acdk::load_checkpoint<float>(a.ckpt);
    const std::vector<acdk::Sample> data = acdk::load_dataset(a.data);
    const acdk::MetricReport rep = acdk::robustness_sweep(model, data, kinds, a.severities, a.seed);
    acdk::write_sweep(rep, a.report);
    for (const auto& r : rep.rows)
        std::printf("%-15s %d  absrel %.4f  delta1 %.4f\n", r.kind.c_str(), r.severity, r.absrel, r.delta1);

    if (!a.pairs.empty()) {
        const auto pairs = acdk::load_ordinal_pairs(a.pairs);
        double correct = 0;
        std::size_t total = 0;
        for (const auto& s : data) {
            auto it = pairs.find(s.name);
            if (it == pairs.end()) {
                for (const char* ext : {".ppm", ".pgm"})
                    if ((it = pairs.find(s.name + ext)) != pairs.end()) break;
            }
            if (it == pairs.end()) continue;
            const acdk::DisparityMap pred = acdk::forward(model, s.image).disparity;
            correct += acdk::ordinal_accuracy(pred, it->second) * static_cast<double>(it->second.size());
            total += it->second.size();
        }
        if (total == 0) throw acdk::Error("no ordinal pairs refer to images in " + a.data);
        std::printf("ordinal accuracy %.4f over %zu pairs\n", correct / static_cast<double>(total), total);
    }
    return 0;
}

struct SdrMapArgs {
    std::string disparity, query, out;
    int patch = 14;
    std::string metric = "euclidean";
};

int run_sdr_map(const SdrMapArgs& a) {
    if (a.patch < 1) throw UsageError("--patch must be >= 1");
    const auto q = parse_query(a.query);
    const auto metric = metric_arg(a.metric);
    acdk::save_image(row_heatmap(acdk::load_pfm(a.disparity), a.patch, q, metric), a.out);
    return 0;
}

struct GradcheckArgs {
    std::uint64_t seed = 0;
    bool inject_fault = false;
};

int run_gradcheck(const GradcheckArgs& a) {
    acdk::GradCheckOptions opt;
    opt.seed = a.seed;
    opt.inject_fault = a.inject_fault;
    const acdk::GradCheckReport rep = acdk::run_gradcheck(opt);
    acdk::print_gradcheck(rep, std::cout);
    if (const auto* f = rep.first_failure()) {
        std::cout << "FAIL " << f->group << " / " << f->name << ": worst " << f->worst << " (relative error "
                  << f->max_rel_error << ")\n";
        return kRuntimeError;
    }
    std::cout << "PASS\n";
    return 0;
}

struct ReportArgs {
    std::string steps, sweep, out, disparity;
    std::vector<std::string> queries;
    int patch = 14;
    std::string metric = "euclidean";
};

std::vector<json> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw acdk::Error("cannot open " + path);
    std::vector<json> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            rows.push_back(json::parse(line));
            if (!rows.back().is_object()) throw acdk::Error("expected a JSON object");
        } catch (const std::exception& e) {
            throw acdk::Error(path + ":" + std::to_string(lineno) + ": malformed line: " + e.what());
        }
    }
    return rows;
}

std::string sweep_grid(const std::string& path) {
    struct Cell {
        std::string absrel, delta1;
    };
    std::vector<std::string> kinds;
    std::set<int> severities;
    std::map<std::string, std::map<int, Cell>> cells;
    int lineno = 0;
    for (const auto& row : read_jsonl(path)) {
        ++lineno;
        try {
            const std::string kind = row.at("kind").get<std::string>();
            const int sev = row.at("severity").get<int>();
            if (!row.at("absrel").is_number() || !row.at("delta1").is_number()) throw acdk::Error("metrics must be numbers");
            if (!cells.count(kind)) kinds.push_back(kind);
            severities.insert(sev);
            cells[kind][sev] = {row.at("absrel").dump(), row.at("delta1").dump()};
        } catch (const std::exception& e) {
            throw acdk::Error(path + ": row " + std::to_string(lineno) + ": " + e.what());
        }
    }
    std::ostringstream os;
    os << "kind";
    for (int s : severities) os << "\tabsrel@" << s << "\tdelta1@" << s;
    os << '\n';
    for (const auto& k : kinds) {
        os << k;
        for (int s : severities) {
            auto it = cells[k].find(s);
            if (it == cells[k].end())
                os << "\t-\t-";
            else
                os << '\t' << it->second.absrel << '\t' << it->second.delta1;
        }
        os << '\n';
    }
    return os.str();
}

std::string steps_summary(const std::string& path) {
    struct Acc {
        double lc = 0, lkd = 0, ls = 0, lt = 0;
        int n = 0;
    };
    std::map<int, Acc> epochs;
    std::size_t count = 0;
    int lineno = 0;
    for (const auto& row : read_jsonl(path)) {
        ++lineno;
        try {
            Acc& a = epochs[row.at("epoch").get<int>()];
            a.lc += row.at("L_c").get<double>();
            a.lkd += row.at("L_kd").get<double>();
            a.ls += row.at("L_s").get<double>();
            a.lt += row.at("L_total").get<double>();
            ++a.n;
            ++count;
        } catch (const std::exception& e) {
            throw acdk::Error(path + ": row " + std::to_string(lineno) + ": " + e.what());
        }
    }
    std::ostringstream os;
    os << "steps " << count << '\n' << "epoch\tL_c\tL_kd\tL_s\tL_total\n";
    char buf[160];
    for (const auto& [e, a] : epochs) {
        std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.6f\t%.6f\t%.6f\n", e, a.lc / a.n, a.lkd / a.n, a.ls / a.n, a.lt / a.n);
        os << buf;
    }
    return os.str();
}

int run_report(const ReportArgs& a) {
    if (a.steps.empty() && a.sweep.empty() && a.queries.empty())
        throw UsageError("nothing to report: pass --steps, --sweep or --query");
    if (!a.queries.empty() && a.disparity.empty()) throw UsageError("--query needs --disparity");
    std::vector<std::pair<int, int>> queries;
    for (const auto& q : a.queries) queries.push_back(parse_query(q));
    const auto metric = metric_arg(a.metric);

    std::string text;
    if (!a.sweep.empty()) text += sweep_grid(a.sweep);
    if (!a.steps.empty()) {
        if (!text.empty()) text += '\n';
        text += steps_summary(a.steps);
    }
    fs::create_directories(a.out);
    {
        std::ofstream summary(fs::path(a.out) / "summary.txt", std::ios::trunc | std::ios::binary);
        if (!summary) throw acdk::Error("cannot write summary in " + a.out);
        summary << text;
    }
    std::cout << text;
    if (!queries.empty()) {
        const acdk::DisparityMap d = acdk::load_pfm(a.disparity);
        for (const auto& q : queries) {
            const fs::path p = fs::path(a.out) / ("sdr_" + std::to_string(q.first) + "_" + std::to_string(q.second) + ".pgm");
            acdk::save_image(row_heatmap(d, a.patch, q, metric), p);
            std::cout << "wrote " << p.string() << '\n';
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Robust relative-depth toolkit: corruption, synthetic data, training and evaluation", "acdk"};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);

    CorruptArgs ca;
    auto* corrupt = app.add_subcommand("corrupt", "Apply one corruption at a fixed severity to every image in a directory");
    corrupt->add_option("--kind", ca.kind, "dark|fog|snow|motion_blur|zoom_blur|contrast|gaussian_noise")->required();
    corrupt->add_option("--severity", ca.severity, "Severity level")->required()->check(CLI::Range(1, 5));
    corrupt->add_option("--seed", ca.seed, "RNG seed");
    corrupt->add_option("--in", ca.in, "Input image directory")->required();
    corrupt->add_option("--out", ca.out, "Output image directory")->required();

    ScheduleArgs sa;
    auto* sched = app.add_subcommand("schedule-corrupt", "Apply the training-time perturbation scheduler to every image");
    sched->add_option("--p-blur", sa.p_blur, "Probability of a blur corruption");
    sched->add_option("--p-weather", sa.p_weather, "Probability of a weather corruption");
    sched->add_option("--seed", sa.seed, "RNG seed");
    sched->add_option("--in", sa.in, "Input image directory")->required();
    sched->add_option("--out", sa.out, "Output image directory")->required();
    sched->add_option("--log", sa.log, "JSON-lines manifest of applied corruptions");

    DatagenArgs da;
    auto* datagen = app.add_subcommand("datagen", "Render synthetic scenes with ground-truth disparity");
    datagen->add_option("--count", da.count, "Number of scenes")->required();
    datagen->add_option("--size", da.size, "Image side in pixels (multiple of 8)");
    datagen->add_option("--seed", da.seed, "RNG seed");
    datagen->add_option("--out", da.out, "Output directory")->required();

    TrainArgs ta;
    auto* train = app.add_subcommand("train", "Pretrain (optional) and fine-tune with the consistency objective");
    train->add_option("--config", ta.config, "key = value configuration file");
    train->add_option("--data", ta.data, "Dataset directory")->required();
    train->add_option("--out", ta.out, "Checkpoint path")->required();
    train->add_option("--log", ta.log, "JSON-lines step report path");
    train->add_flag("--quiet", ta.quiet, "Suppress progress output");

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Clean and corrupted AbsRel/delta1 sweep");
    eval->add_option("--ckpt", ea.ckpt, "Checkpoint path")->required();
    eval->add_option("--data", ea.data, "Dataset directory with ground truth")->required();
    eval->add_option("--kinds", ea.kinds, "Comma-separated corruption kinds")->delimiter(',');
    eval->add_option("--severities", ea.severities, "Comma-separated severities")->delimiter(',');
    eval->add_option("--seed", ea.seed, "RNG seed");
    eval->add_option("--report", ea.report, "JSON-lines report path")->required();
    eval->add_option("--pairs", ea.pairs, "Ordinal pairs JSON-lines file");

    SdrMapArgs ma;
    auto* sdrmap = app.add_subcommand("sdr-map", "Export one row of the spatial distance relation as a heatmap");
    sdrmap->add_option("--disparity", ma.disparity, "Disparity map (PFM)")->required();
    sdrmap->add_option("--patch", ma.patch, "Patch size in pixels");
    sdrmap->add_option("--query", ma.query, "Query patch R,C")->required();
    sdrmap->add_option("--metric", ma.metric, "euclidean|manhattan");
    sdrmap->add_option("--out", ma.out, "Output heatmap (PGM)")->required();

    GradcheckArgs ga;
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks of all analytic gradients");
    gradcheck->add_option("--seed", ga.seed, "RNG seed");
    gradcheck->add_flag("--inject-fault", ga.inject_fault, "Corrupt one model gradient entry (self-test)");

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "Text metric grid, loss summary and SDR heatmaps");
    report->add_option("--steps", ra.steps, "Training step log (JSON-lines)");
    report->add_option("--sweep", ra.sweep, "Evaluation sweep (JSON-lines)");
    report->add_option("--out", ra.out, "Output directory")->required();
    report->add_option("--disparity", ra.disparity, "Disparity map (PFM) for heatmap queries");
    report->add_option("--query", ra.queries, "Heatmap query patch R,C (repeatable)");
    report->add_option("--patch", ra.patch, "Patch size in pixels for heatmaps");
    report->add_option("--metric", ra.metric, "euclidean|manhattan");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*corrupt) return run_corrupt(ca);
        if (*sched) return run_schedule(sa);
        if (*datagen) return run_datagen(da);
        if (*train) return run_train(ta);
        if (*eval) return run_eval(ea);
        if (*sdrmap) return run_sdr_map(ma);
        if (*gradcheck) return run_gradcheck(ga);
        if (*report) return run_report(ra);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kRuntimeError;
    }
    return kUsageError;
}
