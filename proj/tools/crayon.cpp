/// Command-line front end: dataset collection, training, evaluation sweeps,
/// the session server and history replay.

#include "crayon/dataset_io.hpp"
#include "crayon/eval.hpp"
#include "crayon/http_selector.hpp"
#include "crayon/http_service.hpp"
#include "crayon/service.hpp"
#include "crayon/toy_model.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace fs = std::filesystem;
using namespace crayon;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  std::string config_path;
  std::string out = "out";
  std::optional<int> threads;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--seed", c.seed, "Experiment seed (overrides the config)");
  app->add_option("--config", c.config_path, "JSON config with partial overrides")->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "Output directory; every path is relative to it");
  app->add_option("--threads", c.threads, "Worker threads (0 = all cores)");
}

ExperimentConfig resolve_config(const Common& c) {
  Json j = Json::object();
  if (!c.config_path.empty()) {
    try {
      j = Json::parse(read_file(c.config_path));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::validation, std::string("config is not valid json: ") + e.what());
    }
  }
  if (c.seed) j["seed"] = *c.seed;
  if (c.threads) j["threads"] = *c.threads;
  return ExperimentConfig::from_json(j);
}

fs::path dataset_dir(const Common& c) { return fs::path(c.out) / "dataset"; }
fs::path reports_dir(const Common& c) { return fs::path(c.out) / "reports"; }
fs::path models_dir(const Common& c) { return fs::path(c.out) / "models"; }

/// Loads the collected dataset; an explicit config must agree on everything
/// that shaped the collection.
LoadedDataset open_dataset(const Common& c) {
  if (!fs::exists(dataset_dir(c) / kDatasetFile))
    throw Error(ErrorCode::not_found, "no dataset under " + dataset_dir(c).string() + "; run collect first");
  LoadedDataset ld = load_dataset(dataset_dir(c));
  if (!c.config_path.empty() || c.seed) {
    ExperimentConfig want = resolve_config(c);
    if (want.collection_fingerprint() != ld.config.collection_fingerprint())
      throw Error(ErrorCode::hash_mismatch, "config does not match the collected dataset");
    ld.config = want;
  } else if (c.threads) {
    ld.config.threads = *c.threads;
  }
  return ld;
}

ToyModelParams open_model(const fs::path& path, const ToyConfig* expected) {
  if (!fs::exists(path)) throw Error(ErrorCode::not_found, "no model at " + path.string() + "; run train first");
  return load_toy_model(read_file(path.string()), expected);
}

std::string slug(std::string s) {
  for (char& ch : s)
    if (ch == '/' || ch == '=' || ch == ' ') ch = '-';
  return s;
}

void print_report(const MetricsReport& r, const fs::path& path) {
  std::cout << r.name << " -> " << path.string() << "\n";
  for (const auto& c : r.conditions) {
    const Tally t = c.tally();
    std::printf("  %-16s %s = %.4f\n", c.label.c_str(), t.fraction().c_str(), t.rate());
  }
}

struct EvalOptions {
  std::string predictor = "solver";
  std::string prompt_source = "gt";
  std::string split = "test";
  std::string model;
  std::string selector_url;
};

void add_eval_options(CLI::App* app, EvalOptions& o, bool with_source) {
  app->add_option("--predictor", o.predictor, "solver | toy | gt")
      ->check(CLI::IsMember({"solver", "toy", "gt"}));
  if (with_source) app->add_option("--prompt-source", o.prompt_source, "gt | auto | perturbed=<f>");
  app->add_option("--model", o.model, "Toy model file (default <out>/models/toy.json)");
  app->add_option("--selector-url", o.selector_url, "Base URL of an external selector (auto prompts)");
}

struct EvalSetup {
  EvalContext ctx;
  std::optional<ToyModelParams> toy;
  std::unique_ptr<HttpSelectorClient> client;
};

/// Builds the evaluation context; the toy model is loaded only when needed.
std::unique_ptr<EvalSetup> make_eval_setup(const Common& c, const EvalOptions& o, const ExperimentConfig& cfg) {
  auto s = std::make_unique<EvalSetup>();
  s->ctx.predictor = predictor_choice_from_string(o.predictor);
  s->ctx.seed = cfg.seed;
  s->ctx.threads = cfg.threads;
  s->ctx.selector = cfg.selector;
  if (s->ctx.predictor == PredictorChoice::toy) {
    s->toy = open_model(o.model.empty() ? models_dir(c) / "toy.json" : fs::path(o.model), &cfg.toy);
    s->ctx.toy = &*s->toy;
  }
  if (!o.selector_url.empty()) {
    s->client = std::make_unique<HttpSelectorClient>(o.selector_url);
    s->ctx.selector = SelectorMode::external;
    s->ctx.selector_client = s->client.get();
  } else if (cfg.selector == SelectorMode::external) {
    throw Error(ErrorCode::invalid_argument, "external selector mode needs --selector-url");
  }
  return s;
}

int cmd_collect(const Common& c) {
  const ExperimentConfig cfg = resolve_config(c);
  Dataset d = run_collection(cfg);
  const auto bad = replay_failures(d);
  if (!bad.empty()) throw Error(ErrorCode::invalid_state, "ground truth failed to replay for " + bad.front());
  save_dataset(d, dataset_dir(c), cfg);
  std::cout << "collected " << d.records.size() << " records (" << d.split(Split::train).size() << " train, "
            << d.split(Split::test_seen).size() << " test_seen, " << d.split(Split::test_unseen).size()
            << " test_unseen); skipped " << d.skipped_scenes << " scenes -> " << dataset_dir(c).string() << "\n";
  return 0;
}

int cmd_train(const Common& c) {
  const LoadedDataset ld = open_dataset(c);
  const ToyModelParams m = train_toy_model(toy_samples(ld.dataset), ld.config.toy);
  fs::create_directories(models_dir(c));
  const fs::path path = models_dir(c) / "toy.json";
  write_file(path.string(), save_toy_model(m));
  std::printf("trained toy model, final loss %.6f -> %s\n", m.training_curve.back(), path.string().c_str());
  return 0;
}

int cmd_eval(const Common& c, const EvalOptions& o) {
  const LoadedDataset ld = open_dataset(c);
  const auto setup = make_eval_setup(c, o, ld.config);
  const PromptSource src = prompt_source_from_string(o.prompt_source);
  std::vector<const DatasetRecord*> records;
  if (o.split == "test") records = ld.dataset.test();
  else records = ld.dataset.split(split_from_string(o.split));
  MetricsReport r = run_eval(ld.dataset, records, src, ld.config, setup->ctx);
  const fs::path path = reports_dir(c) / ("eval-" + o.predictor + "-" + slug(o.prompt_source) + "-" + o.split + ".json");
  save_report(r, path);
  print_report(r, path);
  return 0;
}

template <typename Run>
int cmd_sweep(const Common& c, const EvalOptions& o, const std::string& name, Run run) {
  const LoadedDataset ld = open_dataset(c);
  const auto setup = make_eval_setup(c, o, ld.config);
  MetricsReport r = run(ld, setup->ctx);
  const fs::path path = reports_dir(c) / (name + "-" + o.predictor + ".json");
  save_report(r, path);
  print_report(r, path);
  return 0;
}

int cmd_sweep_losses(const Common& c) {
  const LoadedDataset ld = open_dataset(c);
  EvalContext ctx;
  ctx.seed = ld.config.seed;
  ctx.threads = ld.config.threads;
  std::vector<ToyModelParams> models;
  MetricsReport r = run_loss_ablation(ld.dataset, ld.config, ctx, &models);
  fs::create_directories(models_dir(c));
  for (std::size_t i = 0; i < models.size(); ++i)
    write_file((models_dir(c) / ("loss-" + slug(loss_ablation_variants()[i].first) + ".json")).string(),
               save_toy_model(models[i]));
  const fs::path path = reports_dir(c) / "sweep-losses.json";
  save_report(r, path);
  print_report(r, path);
  return 0;
}

int cmd_longhorizon(const Common& c, const EvalOptions& o) {
  const ExperimentConfig cfg = resolve_config(c);
  const auto setup = make_eval_setup(c, o, cfg);
  MetricsReport r = run_longhorizon(cfg, setup->ctx);
  const fs::path path = reports_dir(c) / ("longhorizon-" + o.predictor + ".json");
  save_report(r, path);
  print_report(r, path);
  return 0;
}

ServiceConfig service_config(const ExperimentConfig& cfg, PredictorChoice p) {
  ServiceConfig s;
  s.intrinsics = cfg.intrinsics;
  s.camera = cfg.camera;
  s.predictor = p;
  return s;
}

int cmd_serve(const Common& c, const EvalOptions& o, const std::string& host, int port) {
  const ExperimentConfig cfg = resolve_config(c);
  const PredictorChoice p = predictor_choice_from_string(o.predictor);
  std::shared_ptr<const ToyModelParams> toy;
  if (p == PredictorChoice::toy)
    toy = std::make_shared<ToyModelParams>(
        open_model(o.model.empty() ? models_dir(c) / "toy.json" : fs::path(o.model), &cfg.toy));
  Service service(service_config(cfg, p), toy);
  httplib::Server server;
  mount_service(server, service);
  std::cout << "serving on http://" << host << ":" << port << " (config " << service.fingerprint() << ")"
            << std::endl;
  if (!server.listen(host, port)) throw Error(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
  return 0;
}

int cmd_replay(const Common& c, const std::string& history_path, const std::string& kind, std::uint64_t seed) {
  const ExperimentConfig cfg = resolve_config(c);
  const ServiceConfig sc = service_config(cfg, PredictorChoice::solver);
  const fs::path dir = fs::path(c.out) / "replay";
  fs::create_directories(dir);
  History h;
  if (!history_path.empty()) {
    try {
      h = history_from_json(Json::parse(read_file(history_path)));
    } catch (const Json::exception& e) {
      throw Error(ErrorCode::validation, std::string("history is not valid json: ") + e.what());
    }
  } else {
    h.kind = scene_kind_from_string(kind);
    h.seed = seed;
  }
  const ServiceConfig& replay_cfg = sc;
  auto [start, e] = session_start(h.kind, h.seed, replay_cfg);
  write_file((dir / "initial.ppm").string(), encode_ppm(render(start, replay_cfg.intrinsics, e).rgb));
  const Scene final_scene = replay_history(h, replay_cfg);
  write_file((dir / "final.ppm").string(), encode_ppm(render(final_scene, replay_cfg.intrinsics, e).rgb));
  const Json out{{"scene", to_json(final_scene)},
                 {"steps", h.steps.size()},
                 {"final_joint_state", final_scene.joint.state},
                 {"matches_history", history_path.empty() || final_scene.joint.state == h.final_joint_state}};
  write_file((dir / "final_scene.json").string(), out.dump(1) + "\n");
  std::cout << out.dump() << "\n";
  return out.at("matches_history").get<bool>() ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"crayon: prompt-driven manipulation workbench"};
  app.require_subcommand(1);
  Common common;
  EvalOptions eo;

  auto* collect = app.add_subcommand("collect", "Collect and verify a dataset");
  add_common(collect, common);
  auto* train = app.add_subcommand("train", "Train the toy predictor on the train split");
  add_common(train, common);
  auto* eval = app.add_subcommand("eval", "Evaluate a predictor on a split");
  add_common(eval, common);
  add_eval_options(eval, eo, true);
  eval->add_option("--split", eo.split, "test | test_seen | test_unseen | train")
      ->check(CLI::IsMember({"test", "test_seen", "test_unseen", "train"}));
  auto* noise = app.add_subcommand("sweep-noise", "Success versus prompt noise");
  add_common(noise, common);
  add_eval_options(noise, eo, false);
  auto* prompts = app.add_subcommand("sweep-prompts", "Success per prompt pattern");
  add_common(prompts, common);
  add_eval_options(prompts, eo, false);
  auto* losses = app.add_subcommand("sweep-losses", "Train and score toy models per loss variant");
  add_common(losses, common);
  auto* lh = app.add_subcommand("longhorizon", "Two-step pull-then-push tasks");
  add_common(lh, common);
  add_eval_options(lh, eo, false);
  auto* serve = app.add_subcommand("serve", "Run the session HTTP service");
  add_common(serve, common);
  add_eval_options(serve, eo, false);
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(0, 65535));
  auto* replay = app.add_subcommand("replay", "Replay a session history, or render a session start");
  add_common(replay, common);
  std::string history_path, kind = "drawer";
  std::uint64_t scene_seed = 0;
  replay->add_option("--history", history_path, "History JSON from GET /session/{id}/history")
      ->check(CLI::ExistingFile);
  replay->add_option("--kind", kind, "Scene kind when no history is given");
  replay->add_option("--scene-seed", scene_seed, "Scene seed when no history is given");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*collect) return cmd_collect(common);
    if (*train) return cmd_train(common);
    if (*eval) return cmd_eval(common, eo);
    if (*noise)
      return cmd_sweep(common, eo, "sweep-noise", [](const LoadedDataset& ld, const EvalContext& ctx) {
        return run_noise_sweep(ld.dataset, ld.config, ctx);
      });
    if (*prompts)
      return cmd_sweep(common, eo, "sweep-prompts", [](const LoadedDataset& ld, const EvalContext& ctx) {
        return run_prompt_ablation(ld.dataset, ld.config, ctx);
      });
    if (*losses) return cmd_sweep_losses(common);
    if (*lh) return cmd_longhorizon(common, eo);
    if (*serve) return cmd_serve(common, eo, host, port);
    if (*replay) return cmd_replay(common, history_path, kind, scene_seed);
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
