// Command-line front end for the siimil library: synthetic data generation,
// key learning, saliency scoring, salient-bag construction, training,
// evaluation, heatmap export, and hyperparameter sweeps.

#include "siimil/siimil.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using siimil::detail::format_double;

namespace {

void echo(const std::string& key, const std::string& value) {
    std::fprintf(stderr, "%s=%s\n", key.c_str(), value.c_str());
}

void echo(const std::string& key, double value) { echo(key, format_double(value)); }
void echo(const std::string& key, long long value) { echo(key, std::to_string(value)); }

std::ofstream open_output(const fs::path& path) {
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw siimil::Error("cannot open for writing: " + path.string());
    return os;
}

siimil::KeyMatrix load_keys(const fs::path& path) {
    siimil::KeyMatrix keys{siimil::read_embeddings(path).values};
    keys.validate();
    return keys;
}

void check_model_dim(const siimil::AttentionModel& model, const siimil::LabeledEmbeddingBag& bag) {
    if (bag.embeddings.dim() != model.dim())
        throw siimil::Error("bag `" + bag.bag_id + "` has dim " +
                            std::to_string(bag.embeddings.dim()) + " but model has dim " +
                            std::to_string(model.dim()));
}

// ---------------------------------------------------------------- synth ---

struct SynthArgs {
    std::string out_dir;
    long long dim = 16;
    long long bags_per_class = 10;
    std::string instances = "1000";  // `n` or `lo:hi`
    std::vector<double> positive_rates = {0.003, 0.0075, 0.05, 0.2};
    double separation = 4.0;
    std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& args) {
    siimil::SynthConfig cfg;
    cfg.dim = args.dim;
    cfg.bags_per_class = static_cast<int>(args.bags_per_class);
    const auto colon = args.instances.find(':');
    if (colon == std::string::npos) {
        cfg.instances_min = cfg.instances_max = std::stoll(args.instances);
    } else {
        cfg.instances_min = std::stoll(args.instances.substr(0, colon));
        cfg.instances_max = std::stoll(args.instances.substr(colon + 1));
    }
    cfg.positive_rates = args.positive_rates;
    cfg.separation = args.separation;
    cfg.seed = args.seed;
    cfg.validate();

    echo("out_dir", args.out_dir);
    echo("dim", static_cast<long long>(cfg.dim));
    echo("bags_per_class", static_cast<long long>(cfg.bags_per_class));
    echo("instances", args.instances);
    std::string rates;
    for (double r : cfg.positive_rates) rates += (rates.empty() ? "" : ",") + format_double(r);
    echo("positive_rates", rates);
    echo("separation", cfg.separation);
    echo("seed", static_cast<long long>(cfg.seed));

    const auto bags = siimil::generate_dataset(cfg);
    fs::create_directories(args.out_dir);
    siimil::Manifest manifest;
    for (const auto& bag : bags) {
        const std::string file = bag.bag_id + ".siib";
        siimil::write_embeddings(bag.embeddings, fs::path(args.out_dir) / file);
        manifest.records.push_back({bag.bag_id, bag.label, file});
    }
    siimil::write_manifest(manifest, fs::path(args.out_dir) / "manifest.csv");
    std::printf("bags=%zu\n", bags.size());
    return 0;
}

// ----------------------------------------------------------- learn-keys ---

struct LearnKeysArgs {
    std::string manifest;
    long long t_per_bag = 100;
    double rank_tol = 1e-10;
    std::string out;
};

int run_learn_keys(const LearnKeysArgs& args) {
    echo("manifest", args.manifest);
    echo("t_per_bag", args.t_per_bag);
    echo("rank_tol", args.rank_tol);
    echo("out", args.out);

    const siimil::Manifest manifest = siimil::read_manifest(args.manifest);
    std::vector<siimil::EmbeddingMatrix> negatives;
    for (const auto& rec : manifest.records)
        if (rec.label == 0) negatives.push_back(siimil::read_embeddings(rec.embedding_path));
    if (negatives.empty()) throw siimil::Error("no negative bags in manifest");

    siimil::KeyLearnConfig cfg;
    cfg.t_per_bag = args.t_per_bag;
    cfg.rank_rel_tol = args.rank_tol;
    const siimil::KeyMatrix keys = siimil::build_key_matrix(negatives, cfg);
    siimil::EmbeddingMatrix out;
    out.values = keys.values;
    siimil::write_embeddings(out, args.out);
    std::printf("tau=%lld\n", static_cast<long long>(keys.count()));
    return 0;
}

// ----------------------------------------------------------------- score ---

struct ScoreArgs {
    std::string input;
    std::string keys;
    long long top_k = 150;
    std::string out;
};

int run_score(const ScoreArgs& args) {
    echo("input", args.input);
    echo("keys", args.keys);
    echo("top_k", args.top_k);
    echo("out", args.out);

    const siimil::EmbeddingMatrix bag = siimil::read_embeddings(args.input);
    const siimil::KeyMatrix keys = load_keys(args.keys);
    const auto sim = siimil::cosine_similarity_matrix(bag, keys);
    const siimil::Vector saliency = siimil::saliency_scores(sim, args.top_k);

    auto os = open_output(args.out);
    os << "instance_index,row,col,saliency\n";
    for (siimil::Index i = 0; i < bag.count(); ++i) {
        std::int32_t row = -1, col = -1;
        if (bag.coords) {
            row = (*bag.coords)[static_cast<std::size_t>(i)][0];
            col = (*bag.coords)[static_cast<std::size_t>(i)][1];
        }
        os << i << ',' << row << ',' << col << ',' << format_double(saliency(i)) << '\n';
    }
    return 0;
}

// ------------------------------------------------------------- make-bags ---

struct MakeBagsArgs {
    std::string manifest;
    std::string keys;
    long long top_k = 150;
    double keep_ratio = 0.3;
    std::string out_dir;
};

siimil::EmbeddingMatrix salient_embedding_matrix(const siimil::EmbeddingMatrix& original,
                                                 const siimil::SalientBag& bag) {
    siimil::EmbeddingMatrix out;
    out.values = bag.embeddings;
    if (original.coords) {
        std::vector<std::array<std::int32_t, 2>> coords;
        coords.reserve(bag.selected_indices.size());
        for (siimil::Index idx : bag.selected_indices)
            coords.push_back((*original.coords)[static_cast<std::size_t>(idx)]);
        out.coords = std::move(coords);
    }
    if (original.instance_labels) {
        std::vector<std::uint8_t> labels;
        labels.reserve(bag.selected_indices.size());
        for (siimil::Index idx : bag.selected_indices)
            labels.push_back((*original.instance_labels)[static_cast<std::size_t>(idx)]);
        out.instance_labels = std::move(labels);
    }
    return out;
}

int run_make_bags(const MakeBagsArgs& args) {
    echo("manifest", args.manifest);
    echo("keys", args.keys);
    echo("top_k", args.top_k);
    echo("keep_ratio", args.keep_ratio);
    echo("out_dir", args.out_dir);

    const siimil::Manifest manifest = siimil::read_manifest(args.manifest);
    const siimil::KeyMatrix keys = load_keys(args.keys);
    siimil::SiiConfig cfg;
    cfg.top_k = args.top_k;
    cfg.keep_ratio = args.keep_ratio;
    cfg.validate();

    fs::create_directories(args.out_dir);
    siimil::Manifest out_manifest;
    double retained = 0.0;
    for (const auto& rec : manifest.records) {
        const siimil::EmbeddingMatrix bag = siimil::read_embeddings(rec.embedding_path);
        const siimil::SalientBag sb = siimil::sii_bag(bag, keys, cfg, rec.bag_id);
        retained += static_cast<double>(sb.count()) / static_cast<double>(bag.count());

        const std::string file = rec.bag_id + ".siib";
        siimil::write_embeddings(salient_embedding_matrix(bag, sb), fs::path(args.out_dir) / file);
        auto csv = open_output(fs::path(args.out_dir) / (rec.bag_id + ".saliency.csv"));
        csv << "selected_index,saliency\n";
        for (std::size_t i = 0; i < sb.selected_indices.size(); ++i)
            csv << sb.selected_indices[i] << ','
                << format_double(sb.saliency(static_cast<siimil::Index>(i))) << '\n';
        out_manifest.records.push_back({rec.bag_id, rec.label, file});
    }
    siimil::write_manifest(out_manifest, fs::path(args.out_dir) / "manifest.csv");
    std::printf("mean_retained_fraction=%s\n",
                format_double(retained / static_cast<double>(manifest.records.size())).c_str());
    return 0;
}

// ----------------------------------------------------------------- train ---

struct TrainArgs {
    std::string manifest;
    long long folds = 5;
    double val_frac = 0.1;
    std::uint64_t seed = 0;
    long long t_per_bag = 100;
    double rank_tol = 1e-10;
    long long top_k = 150;
    double keep_ratio = 0.3;
    double learning_rate = 0.0002;
    double weight_decay = 0.00001;
    long long max_epochs = 100;
    long long patience = 10;
    long long attention_dim = 128;
    std::string out;
    std::string log;
};

siimil::CvResult run_cv(const std::vector<siimil::LabeledEmbeddingBag>& bags, const TrainArgs& args) {
    siimil::CvConfig cv_cfg;
    cv_cfg.folds = static_cast<int>(args.folds);
    cv_cfg.val_frac = args.val_frac;
    siimil::KeyLearnConfig key_cfg;
    key_cfg.t_per_bag = args.t_per_bag;
    key_cfg.rank_rel_tol = args.rank_tol;
    siimil::SiiConfig sii_cfg;
    sii_cfg.top_k = args.top_k;
    sii_cfg.keep_ratio = args.keep_ratio;
    siimil::TrainConfig train_cfg;
    train_cfg.learning_rate = args.learning_rate;
    train_cfg.weight_decay = args.weight_decay;
    train_cfg.max_epochs = static_cast<int>(args.max_epochs);
    train_cfg.patience = static_cast<int>(args.patience);
    train_cfg.seed = args.seed;
    train_cfg.attention_dim = args.attention_dim;
    return siimil::monte_carlo_cv(bags, cv_cfg, key_cfg, sii_cfg, train_cfg);
}

void echo_train_args(const TrainArgs& args) {
    echo("manifest", args.manifest);
    echo("folds", args.folds);
    echo("val_frac", args.val_frac);
    echo("seed", static_cast<long long>(args.seed));
    echo("t_per_bag", args.t_per_bag);
    echo("rank_tol", args.rank_tol);
    echo("top_k", args.top_k);
    echo("keep_ratio", args.keep_ratio);
    echo("learning_rate", args.learning_rate);
    echo("weight_decay", args.weight_decay);
    echo("max_epochs", args.max_epochs);
    echo("patience", args.patience);
    echo("attention_dim", args.attention_dim);
}

int run_train(const TrainArgs& args) {
    echo_train_args(args);
    echo("out", args.out);
    if (!args.log.empty()) echo("log", args.log);

    const auto bags = siimil::load_dataset(args.manifest);
    const siimil::CvResult cv = run_cv(bags, args);
    siimil::save_model(cv.selected_model, args.out);

    if (!args.log.empty()) {
        auto os = open_output(args.log);
        os << "fold,epoch,train_loss,val_loss,val_auc\n";
        for (const auto& fold : cv.folds)
            for (const auto& e : fold.result.log)
                os << fold.fold << ',' << e.epoch << ',' << format_double(e.train_loss) << ','
                   << format_double(e.val_loss) << ',' << format_double(e.val_auc) << '\n';
    }
    std::printf("selected_fold=%d\nselected_val_auc=%s\n", cv.selected_fold,
                format_double(cv.selected_val_auc).c_str());
    return 0;
}

// ------------------------------------------------------------------ eval ---

struct EvalArgs {
    std::string manifest;
    std::string keys;
    std::string model;
    long long top_k = 150;
    double keep_ratio = 0.3;
    double threshold = 0.5;
    long long bootstrap = 1000;
    double level = 0.95;
    std::uint64_t seed = 0;
    std::string out;
    std::string groups_out;
    std::string tir_out;
};

int run_eval(const EvalArgs& args) {
    echo("manifest", args.manifest);
    echo("keys", args.keys);
    echo("model", args.model);
    echo("top_k", args.top_k);
    echo("keep_ratio", args.keep_ratio);
    echo("threshold", args.threshold);
    echo("bootstrap", args.bootstrap);
    echo("level", args.level);
    echo("seed", static_cast<long long>(args.seed));
    echo("out", args.out);

    const auto bags = siimil::load_dataset(args.manifest);
    const siimil::KeyMatrix keys = load_keys(args.keys);
    const siimil::AttentionModel model = siimil::load_model(args.model);
    siimil::SiiConfig cfg;
    cfg.top_k = args.top_k;
    cfg.keep_ratio = args.keep_ratio;
    cfg.validate();

    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<siimil::SalientBag> salient;
    for (const auto& bag : bags) {
        check_model_dim(model, bag);
        salient.push_back(siimil::sii_bag(bag.embeddings, keys, cfg, bag.bag_id));
        scores.push_back(siimil::bag_probability(salient.back().embeddings, model));
        labels.push_back(bag.label);
    }

    const auto report = siimil::compute_metrics_report(scores, labels, args.threshold,
                                                       static_cast<int>(args.bootstrap), args.level,
                                                       args.seed);
    {
        auto os = open_output(args.out);
        os << "metric,value,ci_lower,ci_upper\n";
        const auto row = [&os](const char* name, const siimil::MetricInterval& m) {
            os << name << ',' << format_double(m.value) << ',' << format_double(m.lower) << ','
               << format_double(m.upper) << '\n';
        };
        row("auc", report.auc);
        row("accuracy", report.accuracy);
        row("precision", report.precision);
        row("recall", report.recall);
        row("f1", report.f1);
        os << "threshold," << format_double(report.threshold) << ','
           << format_double(report.threshold) << ',' << format_double(report.threshold) << '\n';
    }

    if (!args.groups_out.empty()) {
        std::vector<std::optional<std::vector<std::uint8_t>>> instance_labels;
        for (const auto& bag : bags) instance_labels.push_back(bag.embeddings.instance_labels);
        const auto groups = siimil::grouped_recall(scores, labels, instance_labels, args.threshold);
        auto os = open_output(args.groups_out);
        os << "group,low,high,n_bags,recall\n";
        for (std::size_t g = 0; g < groups.size(); ++g) {
            os << g << ',' << format_double(groups[g].low) << ',' << format_double(groups[g].high)
               << ',' << groups[g].bag_count << ','
               << (groups[g].recall ? format_double(*groups[g].recall) : std::string{}) << '\n';
        }
    }

    if (!args.tir_out.empty()) {
        const auto rows = siimil::tir_amplification_report(bags, salient);
        auto os = open_output(args.tir_out);
        os << "group,low,high,n_bags,mean_tir_before,mean_tir_after,ratio\n";
        for (const auto& r : rows)
            os << siimil::tir_group_index(r.low) << ',' << format_double(r.low) << ','
               << format_double(r.high) << ',' << r.bag_count << ','
               << format_double(r.mean_tir_before) << ',' << format_double(r.mean_tir_after) << ','
               << format_double(r.ratio) << '\n';
    }

    std::printf("auc=%s\n", format_double(report.auc.value).c_str());
    return 0;
}

// --------------------------------------------------------------- heatmap ---

struct HeatmapArgs {
    std::string input;
    std::string keys;
    std::string model;
    long long top_k = 150;
    double keep_ratio = 0.3;
    std::string out_prefix;
};

int run_heatmap(const HeatmapArgs& args) {
    echo("input", args.input);
    echo("keys", args.keys);
    echo("model", args.model);
    echo("top_k", args.top_k);
    echo("keep_ratio", args.keep_ratio);
    echo("out_prefix", args.out_prefix);

    const siimil::EmbeddingMatrix bag = siimil::read_embeddings(args.input);
    const siimil::KeyMatrix keys = load_keys(args.keys);
    const siimil::AttentionModel model = siimil::load_model(args.model);
    if (bag.dim() != model.dim())
        throw siimil::Error("bag has dim " + std::to_string(bag.dim()) + " but model has dim " +
                            std::to_string(model.dim()));
    siimil::SiiConfig cfg;
    cfg.top_k = args.top_k;
    cfg.keep_ratio = args.keep_ratio;
    cfg.validate();

    const siimil::SalientBag sb = siimil::sii_bag(bag, keys, cfg);
    const auto fwd = siimil::attention_forward(sb.embeddings, model);
    const std::vector<double> attention(fwd.attention.data(), fwd.attention.data() + fwd.attention.size());

    siimil::write_heatmap_csv(fs::path(args.out_prefix + ".csv"), bag, sb.selected_indices, attention);
    const auto grid = siimil::attention_heatmap(bag, sb.selected_indices, attention);
    siimil::write_heatmap_pgm(fs::path(args.out_prefix + ".pgm"), grid);
    std::printf("grid=%lldx%lld\n", static_cast<long long>(grid.rows),
                static_cast<long long>(grid.cols));
    return 0;
}

// ---------------------------------------------------------------- ablate ---

struct AblateArgs {
    TrainArgs train;  // reuses manifest/folds/seed/optimizer flags
    std::vector<long long> grid_t = {100};
    std::vector<long long> grid_k = {150};
    std::vector<double> grid_r = {0.3};
    std::string out;
};

int run_ablate(const AblateArgs& args) {
    echo_train_args(args.train);
    std::string gt, gk, gr;
    for (auto v : args.grid_t) gt += (gt.empty() ? "" : ",") + std::to_string(v);
    for (auto v : args.grid_k) gk += (gk.empty() ? "" : ",") + std::to_string(v);
    for (auto v : args.grid_r) gr += (gr.empty() ? "" : ",") + format_double(v);
    echo("grid_t", gt);
    echo("grid_k", gk);
    echo("grid_r", gr);
    echo("out", args.out);

    const auto bags = siimil::load_dataset(args.train.manifest);
    auto os = open_output(args.out);
    os << "t_per_bag,top_k,keep_ratio,mean_val_auc\n";
    for (long long t : args.grid_t)
        for (long long k : args.grid_k)
            for (double r : args.grid_r) {
                TrainArgs cell = args.train;
                cell.t_per_bag = t;
                cell.top_k = k;
                cell.keep_ratio = r;
                const siimil::CvResult cv = run_cv(bags, cell);
                double mean_auc = 0.0;
                for (const auto& fold : cv.folds) mean_auc += fold.val_auc;
                mean_auc /= static_cast<double>(cv.folds.size());
                os << t << ',' << k << ',' << format_double(r) << ',' << format_double(mean_auc)
                   << '\n';
            }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"salient instance inference MIL on precomputed embeddings"};
    app.require_subcommand(1);

    SynthArgs synth;
    auto* synth_cmd = app.add_subcommand("synth", "generate a seeded synthetic rare-positive dataset");
    synth_cmd->add_option("--out-dir", synth.out_dir, "output directory")->required();
    synth_cmd->add_option("--dim", synth.dim, "embedding dimensionality")->check(CLI::Range(2, 1 << 20));
    synth_cmd->add_option("--bags-per-class", synth.bags_per_class)->check(CLI::PositiveNumber);
    synth_cmd->add_option("--instances", synth.instances, "instances per bag: `n` or `lo:hi`");
    synth_cmd->add_option("--positive-rates", synth.positive_rates, "target TIRs, cycled over positive bags")
        ->delimiter(',');
    synth_cmd->add_option("--separation", synth.separation)->check(CLI::NonNegativeNumber);
    synth_cmd->add_option("--seed", synth.seed);

    LearnKeysArgs learn;
    auto* learn_cmd = app.add_subcommand("learn-keys", "learn representative keys from negative bags");
    learn_cmd->add_option("--manifest", learn.manifest)->required();
    learn_cmd->add_option("--t-per-bag", learn.t_per_bag)->check(CLI::PositiveNumber);
    learn_cmd->add_option("--rank-tol", learn.rank_tol)->check(CLI::PositiveNumber);
    learn_cmd->add_option("--out", learn.out)->required();

    ScoreArgs score;
    auto* score_cmd = app.add_subcommand("score", "emit per-instance saliency scores for one bag");
    score_cmd->add_option("--input", score.input)->required();
    score_cmd->add_option("--keys", score.keys)->required();
    score_cmd->add_option("--top-k", score.top_k)->check(CLI::PositiveNumber);
    score_cmd->add_option("--out", score.out)->required();

    MakeBagsArgs make;
    auto* make_cmd = app.add_subcommand("make-bags", "select salient instances for every bag");
    make_cmd->add_option("--manifest", make.manifest)->required();
    make_cmd->add_option("--keys", make.keys)->required();
    make_cmd->add_option("--top-k", make.top_k)->check(CLI::PositiveNumber);
    make_cmd->add_option("--keep-ratio", make.keep_ratio)
        ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
    make_cmd->add_option("--out-dir", make.out_dir)->required();

    TrainArgs train;
    auto* train_cmd = app.add_subcommand("train", "Monte Carlo cross-validated training");
    const auto add_train_flags = [](CLI::App* cmd, TrainArgs& t) {
        cmd->add_option("--manifest", t.manifest)->required();
        cmd->add_option("--folds", t.folds)->check(CLI::PositiveNumber);
        cmd->add_option("--val-frac", t.val_frac)
            ->check(CLI::Range(std::numeric_limits<double>::min(), 0.999));
        cmd->add_option("--seed", t.seed);
        cmd->add_option("--t-per-bag", t.t_per_bag)->check(CLI::PositiveNumber);
        cmd->add_option("--rank-tol", t.rank_tol)->check(CLI::PositiveNumber);
        cmd->add_option("--top-k", t.top_k)->check(CLI::PositiveNumber);
        cmd->add_option("--keep-ratio", t.keep_ratio)
            ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
        cmd->add_option("--learning-rate", t.learning_rate)->check(CLI::PositiveNumber);
        cmd->add_option("--weight-decay", t.weight_decay)->check(CLI::NonNegativeNumber);
        cmd->add_option("--max-epochs", t.max_epochs)->check(CLI::PositiveNumber);
        cmd->add_option("--patience", t.patience)->check(CLI::PositiveNumber);
        cmd->add_option("--attention-dim", t.attention_dim)->check(CLI::PositiveNumber);
    };
    add_train_flags(train_cmd, train);
    train_cmd->add_option("--out", train.out)->required();
    train_cmd->add_option("--log", train.log, "epoch log CSV");

    EvalArgs eval;
    auto* eval_cmd = app.add_subcommand("eval", "classification metrics with bootstrap CIs");
    eval_cmd->add_option("--manifest", eval.manifest)->required();
    eval_cmd->add_option("--keys", eval.keys)->required();
    eval_cmd->add_option("--model", eval.model)->required();
    eval_cmd->add_option("--top-k", eval.top_k)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--keep-ratio", eval.keep_ratio)
        ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
    eval_cmd->add_option("--threshold", eval.threshold)->check(CLI::Range(0.0, 1.0));
    eval_cmd->add_option("--bootstrap", eval.bootstrap)->check(CLI::PositiveNumber);
    eval_cmd->add_option("--level", eval.level)
        ->check(CLI::Range(std::numeric_limits<double>::min(), 0.999));
    eval_cmd->add_option("--seed", eval.seed);
    eval_cmd->add_option("--out", eval.out)->required();
    eval_cmd->add_option("--groups-out", eval.groups_out, "TIR-grouped recall CSV");
    eval_cmd->add_option("--tir-out", eval.tir_out, "TIR amplification CSV");

    HeatmapArgs heat;
    auto* heat_cmd = app.add_subcommand("heatmap", "attention heatmap CSV + PGM for one bag");
    heat_cmd->add_option("--input", heat.input)->required();
    heat_cmd->add_option("--keys", heat.keys)->required();
    heat_cmd->add_option("--model", heat.model)->required();
    heat_cmd->add_option("--top-k", heat.top_k)->check(CLI::PositiveNumber);
    heat_cmd->add_option("--keep-ratio", heat.keep_ratio)
        ->check(CLI::Range(std::numeric_limits<double>::min(), 1.0));
    heat_cmd->add_option("--out-prefix", heat.out_prefix)->required();

    AblateArgs ablate;
    auto* ablate_cmd = app.add_subcommand("ablate", "sweep (t, K, r) and record mean validation AUC");
    add_train_flags(ablate_cmd, ablate.train);
    ablate_cmd->add_option("--grid-t", ablate.grid_t)->delimiter(',');
    ablate_cmd->add_option("--grid-k", ablate.grid_k)->delimiter(',');
    ablate_cmd->add_option("--grid-r", ablate.grid_r)->delimiter(',');
    ablate_cmd->add_option("--out", ablate.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;  // help/version exit 0, usage errors exit 2
    }

    try {
        if (synth_cmd->parsed()) return run_synth(synth);
        if (learn_cmd->parsed()) return run_learn_keys(learn);
        if (score_cmd->parsed()) return run_score(score);
        if (make_cmd->parsed()) return run_make_bags(make);
        if (train_cmd->parsed()) return run_train(train);
        if (eval_cmd->parsed()) return run_eval(eval);
        if (heat_cmd->parsed()) return run_heatmap(heat);
        if (ablate_cmd->parsed()) return run_ablate(ablate);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
