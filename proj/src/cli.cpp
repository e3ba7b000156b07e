#include "tcedit/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <optional>
#include <ostream>
#include <set>

#include <CLI11.hpp>

#include "tcedit/config.hpp"
#include "tcedit/diagnostics.hpp"
#include "tcedit/edit.hpp"
#include "tcedit/error.hpp"
#include "tcedit/eval.hpp"
#include "tcedit/io.hpp"
#include "tcedit/rng.hpp"

namespace tcedit {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Flags shared by every subcommand: --config, --seed and one --section.key per RunConfig field.
struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::vector<std::pair<std::string, std::string>> fields;
    std::vector<std::string> values;
    std::set<std::string> touched;  // dotted keys set by file or flag

    void attach(CLI::App& app) {
        app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
        app.add_option("--seed", seed, "Seed for this command");
        const auto doc = run_config_to_json(RunConfig{});
        fields.clear();
        for (const auto& [section, body] : doc.items()) {
            for (const auto& [key, value] : body.items()) {
                fields.emplace_back(section, key);
            }
        }
        values.assign(fields.size(), std::string());
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const auto& [section, key] = fields[i];
            app.add_option("--" + section + "." + key, values[i])->group("Config overrides");
        }
    }

    RunConfig resolve(const CLI::App& app, RunConfig base) {
        if (!config_path.empty()) {
            const auto doc = json::parse(read_text_file(config_path), nullptr, false);
            if (doc.is_discarded()) {
                throw ConfigError({"config '" + config_path + "' is not valid JSON"});
            }
            base = apply_config_json(std::move(base), doc);
            if (doc.is_object()) {
                for (const auto& [section, body] : doc.items()) {
                    for (const auto& [key, value] : body.items()) {
                        touched.insert(section + "." + key);
                    }
                }
            }
        }
        std::vector<std::string> assignments;
        for (std::size_t i = 0; i < fields.size(); ++i) {
            const std::string dotted = fields[i].first + "." + fields[i].second;
            if (app.count("--" + dotted) > 0) {
                assignments.push_back(dotted + "=" + values[i]);
                touched.insert(dotted);
            }
        }
        return apply_overrides(std::move(base), assignments);
    }
};

std::vector<fs::path> scenes_in(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("'" + dir.string() + "' is not a directory");
    }
    std::vector<fs::path> prefixes;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".pool") {
            prefixes.push_back(entry.path().parent_path() / entry.path().stem());
        }
    }
    std::sort(prefixes.begin(), prefixes.end());
    if (prefixes.empty()) {
        throw std::runtime_error("no .pool files in '" + dir.string() + "'");
    }
    return prefixes;
}

std::vector<Scene> load_scenes(const std::vector<fs::path>& prefixes) {
    std::vector<Scene> scenes;
    for (const auto& p : prefixes) {
        scenes.push_back(load_scene(p));
    }
    return scenes;
}

std::vector<fs::path> as_paths(const std::vector<std::string>& names) {
    return {names.begin(), names.end()};
}

std::string fixed(double v, int digits = 2) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

int cmd_gen(const RunConfig& config, const fs::path& out_dir, std::ostream& out) {
    fs::create_directories(out_dir);
    std::vector<Shot> all;
    std::size_t frames = 0;
    for (std::size_t s = 0; s < config.generator.count; ++s) {
        auto spec = config.generator.spec;
        spec.seed += s;
        auto show = generate_synthetic_show(spec);
        const std::string id = "scene_" + std::to_string(spec.seed);
        save_scene(out_dir / id, Scene{id, show.pool, show.annotation});
        const auto shots = shots_from_annotation(show.annotation);
        all.insert(all.end(), shots.begin(), shots.end());
        frames += show.pool.frames;
        out << id << ": " << show.pool.frames << " frames, " << show.pool.tracks << " tracks, " << shots.size()
            << " shots\n";
    }
    const double fps = config.generator.spec.fps;
    std::size_t shortest = all.front().length();
    std::size_t longest = 0;
    std::size_t under8 = 0;
    for (const auto& s : all) {
        shortest = std::min(shortest, s.length());
        longest = std::max(longest, s.length());
        under8 += static_cast<double>(s.length()) / fps <= 8.0 ? 1 : 0;
    }
    out << config.generator.count << " scenes, " << frames << " frames, " << all.size() << " shots\n"
        << "shot length (s): median " << fixed(median_shot_frames(all) / fps) << ", mean "
        << fixed(static_cast<double>(frames) / static_cast<double>(all.size()) / fps) << ", min "
        << fixed(static_cast<double>(shortest) / fps) << ", max " << fixed(static_cast<double>(longest) / fps)
        << ", within 8 s " << fixed(100.0 * static_cast<double>(under8) / static_cast<double>(all.size()), 1)
        << "%\n";
    return kExitOk;
}

int cmd_train(const RunConfig& config, const std::string& data_dir, const std::vector<std::string>& scene_args,
              const std::vector<std::string>& test_args, const fs::path& out_dir, std::ostream& out) {
    std::vector<fs::path> train_paths;
    std::vector<fs::path> test_paths = as_paths(test_args);
    if (!data_dir.empty()) {
        auto all = scenes_in(data_dir);
        if (all.size() >= 2 && test_paths.empty()) {
            const auto [tr, te] = split_scenes(all, config.train.seed);
            train_paths = tr;
            test_paths = te;
        } else {
            train_paths = all;
        }
    }
    for (const auto& s : scene_args) {
        train_paths.emplace_back(s);
    }
    if (train_paths.empty()) {
        throw ConfigError({"train needs --data DIR or at least one --scene"});
    }
    const auto scenes = load_scenes(train_paths);
    out << "training on " << scenes.size() << " scenes, " << to_string(config.model.streams) << " streams, "
        << config.train.epochs << " epochs\n";
    auto result = train(scenes, config.model, config.train, [&out](const EpochLoss& e) {
        out << "epoch " << e.epoch << " step " << e.step << " loss " << fixed(e.mean_loss, 6) << '\n' << std::flush;
    });
    fs::create_directories(out_dir);
    save_checkpoint(out_dir / "model.ckpt", result.params);
    write_text_file(out_dir / "loss_curve.tsv", format_loss_curve(result.curve));
    json split{{"train", json::array()}, {"test", json::array()}};
    for (const auto& p : train_paths) {
        split["train"].push_back(p.string());
    }
    for (const auto& p : test_paths) {
        split["test"].push_back(p.string());
    }
    write_text_file(out_dir / "split.json", split.dump(2) + "\n");
    out << result.groups << " groups, " << result.instances << " instances, " << result.clipped_groups
        << " clipped at scene ends\n";
    if (!result.curve.empty()) {
        out << "final epoch loss " << fixed(result.curve.back().mean_loss, 6) << '\n';
    }
    out << "wrote " << (out_dir / "model.ckpt").string() << '\n';
    return kExitOk;
}

// Config problems and checkpoint mismatches are reported together.
void check_against_checkpoint(const CommonFlags& flags, const RunConfig& config, const ModelConfig& ckpt) {
    std::vector<std::string> problems = config.problems();
    if (flags.touched.contains("model.d_in") && config.model.d_in != ckpt.d_in) {
        problems.push_back("model.d_in " + std::to_string(config.model.d_in) + " does not match checkpoint d_in " +
                           std::to_string(ckpt.d_in));
    }
    if (flags.touched.contains("model.window") && config.model.window != ckpt.window) {
        problems.push_back("model.window " + std::to_string(config.model.window) +
                           " does not match checkpoint window " + std::to_string(ckpt.window));
    }
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
}

int cmd_eval(const CommonFlags& flags, const RunConfig& config, const fs::path& checkpoint,
             const std::vector<std::string>& scene_args, const std::string& split_path, const std::string& data_dir,
             const std::string& out_path, std::ostream& out) {
    const auto params = load_checkpoint(checkpoint);
    check_against_checkpoint(flags, config, params.config);
    std::vector<fs::path> paths = as_paths(scene_args);
    if (!split_path.empty()) {
        const auto doc = json::parse(read_text_file(split_path));
        for (const auto& p : doc.at("test")) {
            paths.emplace_back(p.get<std::string>());
        }
    }
    if (!data_dir.empty()) {
        const auto found = scenes_in(data_dir);
        paths.insert(paths.end(), found.begin(), found.end());
    }
    if (paths.empty()) {
        throw ConfigError({"eval needs --scene, --split or --data"});
    }
    const auto scenes = load_scenes(paths);
    for (const auto& s : scenes) {
        if (s.pool.width != params.config.d_in) {
            throw DimensionError("scene '" + s.id + "' has feature width " + std::to_string(s.pool.width) +
                                 ", checkpoint d_in is " + std::to_string(params.config.d_in));
        }
    }
    SamplingConfig sampling{params.config.window, config.eval.step, config.eval.groups_per_boundary};
    const auto samples = generate_scene_samples(scenes, sampling);
    if (samples.group_count() == 0) {
        throw std::runtime_error("test scenes produced no boundary samples");
    }
    const auto model = report_from_groups(score_groups(params, samples));
    const auto random = random_baseline(label_groups(samples), config.eval.baseline_seed);
    const std::vector<std::pair<std::string, EvalReport>> rows{{"Model (" + to_string(params.config.streams) + ")", model},
                                                               {"Random", random}};
    out << format_report_table(rows);
    out << model.group_count << " groups, " << model.instance_count << " instances over " << scenes.size()
        << " scenes\n";
    if (model.no_predicted_positive) {
        out << "warning: no instance scored >= 0.5; precision reported as 0\n";
    }
    if (!out_path.empty()) {
        json doc{{"checkpoint", checkpoint.string()},
                 {"scenes", json::array()},
                 {"model", report_to_json(model)},
                 {"random", report_to_json(random)}};
        for (const auto& p : paths) {
            doc["scenes"].push_back(p.string());
        }
        write_text_file(out_path, doc.dump(2) + "\n");
    }
    return kExitOk;
}

int cmd_edit(const CommonFlags& flags, const RunConfig& config, const fs::path& checkpoint, const fs::path& pool_path,
             const fs::path& out_path, const std::string& annotation_path, std::ostream& out) {
    const auto params = load_checkpoint(checkpoint);
    check_against_checkpoint(flags, config, params.config);
    const auto pool = load_pool(pool_path);
    const auto selections = autoregressive_edit(params, pool, config.edit);
    auto edl = make_edl(selections, pool.fps, pool_path.string());
    edl.validate(pool.frames);
    save_edl(out_path, edl);
    out << edl.shots.size() << " shots over " << pool.frames << " frames, median shot "
        << fixed(median_shot_frames(edl.shots) / pool.fps) << " s\n";
    if (!annotation_path.empty()) {
        const auto truth = load_annotation(annotation_path);
        truth.validate_against(pool);
        Rng rng(flags.seed.value_or(0));
        EditAnnotation random;
        random.tracks = pool.tracks;
        random.selected.resize(pool.frames);
        for (auto& t : random.selected) {
            t = static_cast<TrackIndex>(rng.index(pool.tracks));
        }
        out << "agreement with annotation: model " << fixed(selection_agreement(selections, truth)) << "%, random "
            << fixed(selection_agreement(random, truth)) << "%\n";
    }
    out << "wrote " << out_path.string() << '\n';
    return kExitOk;
}

int cmd_gradcheck(const RunConfig& config, const ModelGradCheckOptions& options, std::ostream& out) {
    const auto report = gradcheck_model(config.model, options);
    out << format_gradcheck_report(report);
    return report.passed() ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-camera editing with temporal and contextual transformers", "tcedit"};
    app.require_subcommand(1);

    CommonFlags gen_flags, train_flags, eval_flags, edit_flags, grad_flags;

    auto* gen = app.add_subcommand("gen", "Generate synthetic scenes");
    gen_flags.attach(*gen);
    std::string gen_out;
    std::optional<std::size_t> gen_count;
    gen->add_option("--out", gen_out, "Output directory")->required();
    gen->add_option("--count", gen_count, "Number of scenes");

    auto* trn = app.add_subcommand("train", "Train a model");
    train_flags.attach(*trn);
    std::string data_dir;
    std::vector<std::string> train_scenes, test_scenes;
    std::string train_out;
    trn->add_option("--data", data_dir, "Directory of scenes, split 4:1");
    trn->add_option("--scene", train_scenes, "Training scene prefix (repeatable)");
    trn->add_option("--test-scene", test_scenes, "Held-out scene prefix (repeatable)");
    trn->add_option("--out", train_out, "Output directory")->required();

    auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint");
    eval_flags.attach(*evl);
    std::string eval_ckpt, eval_split, eval_data, eval_out;
    std::vector<std::string> eval_scenes;
    evl->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
    evl->add_option("--scene", eval_scenes, "Test scene prefix (repeatable)");
    evl->add_option("--split", eval_split, "split.json written by train; uses its test list");
    evl->add_option("--data", eval_data, "Directory of test scenes");
    evl->add_option("--out", eval_out, "Write the report as JSON");

    auto* edt = app.add_subcommand("edit", "Edit a pool into an EDL");
    edit_flags.attach(*edt);
    std::string edit_ckpt, edit_pool, edit_out, edit_ann;
    std::optional<std::size_t> stride, min_shot;
    edt->add_option("--checkpoint", edit_ckpt, "Checkpoint file")->required();
    edt->add_option("--pool", edit_pool, "Pool file")->required();
    edt->add_option("--out", edit_out, "EDL output path")->required();
    edt->add_option("--decision-stride", stride, "Decide every k frames");
    edt->add_option("--min-shot-frames", min_shot, "Minimum shot length, 0 disables");
    edt->add_option("--annotation", edit_ann, "Ground-truth annotation to report agreement against");

    auto* gck = app.add_subcommand("gradcheck", "Check model gradients against finite differences");
    grad_flags.attach(*gck);
    ModelGradCheckOptions grad_options;
    gck->add_option("--tracks", grad_options.tracks, "Tracks per group");
    gck->add_option("--groups", grad_options.groups, "Sample groups");
    gck->add_option("--tolerance", grad_options.tolerance, "Relative error bound");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (gen->parsed()) {
            auto config = gen_flags.resolve(*gen, RunConfig{});
            if (gen_count) {
                config.generator.count = *gen_count;
            }
            if (gen_flags.seed) {
                config.generator.spec.seed = *gen_flags.seed;
            }
            config.validate();
            return cmd_gen(config, gen_out, out);
        }
        if (trn->parsed()) {
            auto config = train_flags.resolve(*trn, RunConfig{});
            if (train_flags.seed) {
                config.model.seed = *train_flags.seed;
                config.train.seed = *train_flags.seed;
            }
            config.validate();
            return cmd_train(config, data_dir, train_scenes, test_scenes, train_out, out);
        }
        if (evl->parsed()) {
            auto config = eval_flags.resolve(*evl, RunConfig{});
            if (eval_flags.seed) {
                config.eval.baseline_seed = *eval_flags.seed;
            }
            return cmd_eval(eval_flags, config, eval_ckpt, eval_scenes, eval_split, eval_data, eval_out, out);
        }
        if (edt->parsed()) {
            auto config = edit_flags.resolve(*edt, RunConfig{});
            if (stride) {
                config.edit.decision_stride = *stride;
            }
            if (min_shot) {
                config.edit.min_shot_frames = *min_shot;
            }
            return cmd_edit(edit_flags, config, edit_ckpt, edit_pool, edit_out, edit_ann, out);
        }
        RunConfig base;
        base.model = tiny_model_config();
        base.generator.spec.width = base.model.d_in;
        base.generator.spec.tracks = grad_options.tracks;
        auto config = grad_flags.resolve(*gck, base);
        if (grad_flags.seed) {
            grad_options.seed = *grad_flags.seed;
        }
        config.model.validate();
        return cmd_gradcheck(config, grad_options, out);
    } catch (const ConfigError& e) {
        err << "config error:\n";
        for (const auto& p : e.problems()) {
            err << "  " << p << '\n';
        }
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace tcedit
