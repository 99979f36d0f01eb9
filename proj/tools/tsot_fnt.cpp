// tools/tsot_fnt.cpp

// Copyright 2026  tsot-fnt authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// tsot-fnt: command-line front end.
//
//   tsot-fnt synth-data  --out data/
//   tsot-fnt lm-pretrain --data data/ --out lm/
//   tsot-fnt train       --data data/ --out exp/ [--variant naive] [--init-predictor lm/lm.ckpt]
//   tsot-fnt adapt       --model exp/model.ckpt --text data/adapt_text.txt --out adapt/
//   tsot-fnt decode      --model exp/model.ckpt --data data/ --split test_general_mixed --out hyp.jsonl
//   tsot-fnt score       --hyp hyp.jsonl --ref data/test_general_mixed.jsonl --out score/
//
// Every subcommand accepts --config <file.json>; flags given on the command
// line override keys of the file. Failures print one JSON line on stderr.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsot/driver.hpp"

using nlohmann::json;

namespace {

json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  return json::parse(is);
}

// Collects flag values that were actually given, keyed by config name.
class Overrides {
 public:
  template <typename T>
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto holder = std::make_shared<T>();
    CLI::Option* opt = app->add_option(flag, *holder, help);
    setters_.push_back([opt, holder, key](json& j) {
      if (opt->count() > 0) j[key] = *holder;
    });
  }

  json apply(const std::string& config_path) const {
    json j = config_path.empty() ? json::object() : read_json(config_path);
    for (const auto& s : setters_) s(j);
    return j;
  }

 private:
  std::vector<std::function<void(json&)>> setters_;
};

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j[key].get<T>() : fallback;
}

std::string require(const json& j, const char* key) {
  if (!j.contains(key) || j[key].get<std::string>().empty())
    throw std::invalid_argument(std::string("missing required setting '") + key + "'");
  return j[key].get<std::string>();
}

tsot::ModelConfig model_config(const json& j) {
  json m = j.contains("model_config") ? read_json(j["model_config"].get<std::string>()) : json::object();
  if (j.contains("model")) m.update(j["model"]);
  if (j.contains("variant")) m["variant"] = j["variant"];
  return tsot::model_config_from_json(m);
}

tsot::OptimOptions optim(const json& j, tsot::OptimOptions o) {
  o.peak_lr = get_or(j, "lr", o.peak_lr);
  o.warmup_steps = get_or(j, "warmup_steps", o.warmup_steps);
  o.steps = get_or(j, "steps", o.steps);
  o.batch_size = get_or(j, "batch_size", o.batch_size);
  o.adam.weight_decay = get_or(j, "weight_decay", o.adam.weight_decay);
  o.adam.clip_norm = get_or(j, "clip_norm", o.adam.clip_norm);
  if (o.steps < 0 || o.batch_size < 1 || o.warmup_steps < 0 || !(o.peak_lr > 0))
    throw std::invalid_argument("invalid optimizer settings");
  return o;
}

tsot::LossConfig loss_config(const json& j) {
  tsot::LossConfig c;
  c.lambda = get_or(j, "lambda", c.lambda);
  c.omega = get_or(j, "omega", c.omega);
  std::string dir = get_or<std::string>(j, "kl_direction", "original_to_adapted");
  if (dir == "original_to_adapted") c.kl_direction = tsot::KlDirection::kOriginalToAdapted;
  else if (dir == "adapted_to_original") c.kl_direction = tsot::KlDirection::kAdaptedToOriginal;
  else throw std::invalid_argument("kl_direction must be original_to_adapted or adapted_to_original");
  std::string red = get_or<std::string>(j, "reduction", "mean");
  if (red != "mean" && red != "sum") throw std::invalid_argument("reduction must be mean or sum");
  c.reduction = red == "mean" ? tsot::Reduction::kMean : tsot::Reduction::kSum;
  c.validate();
  return c;
}

void add_optim_flags(CLI::App* app, Overrides& ov) {
  ov.add<long>(app, "--steps", "steps", "Number of updates");
  ov.add<int>(app, "--batch", "batch_size", "Utterances (or sentences) per update");
  ov.add<double>(app, "--lr", "lr", "Peak learning rate");
  ov.add<long>(app, "--warmup", "warmup_steps", "Warm-up steps");
}

int run_synth(const json& j) {
  tsot::SynthConfig cfg = tsot::synth_config_from_json(j);
  std::string out = require(j, "out");
  auto sum = tsot::cmd_synth_data(cfg, out);
  for (const auto& [name, n] : sum.utterances)
    std::cout << name << ": " << n << " utterances, " << 100.0 * sum.mixed_fraction[name]
              << "% mixed\n";
  return 0;
}

int run_lm(const json& j) {
  tsot::LmPretrainOptions o;
  o.data_dir = require(j, "data");
  o.out_dir = require(j, "out");
  o.text = get_or<std::string>(j, "text", "");
  o.heldout = get_or<std::string>(j, "heldout", "");
  o.model = model_config(j);
  o.optim = optim(j, o.optim);
  o.seed = get_or<std::uint64_t>(j, "seed", o.seed);
  auto s = tsot::cmd_lm_pretrain(o);
  std::cout << json{{"initial_ppl", s.initial_ppl}, {"final_ppl", s.final_ppl},
                    {"checkpoint", s.checkpoint}}.dump()
            << '\n';
  return 0;
}

int run_train(const json& j) {
  tsot::TrainOptions o;
  o.data_dir = require(j, "data");
  o.out_dir = require(j, "out");
  o.model = model_config(j);
  o.loss = loss_config(j);
  o.optim = optim(j, o.optim);
  o.seed = get_or<std::uint64_t>(j, "seed", o.seed);
  o.init_encoder = get_or<std::string>(j, "init_encoder", "");
  o.init_predictor = get_or<std::string>(j, "init_predictor", "");
  o.resume = get_or<std::string>(j, "resume", "");
  o.eval_every = get_or(j, "eval_every", o.eval_every);
  o.checkpoint_every = get_or(j, "checkpoint_every", o.checkpoint_every);
  o.stop_after = get_or(j, "stop_after", o.stop_after);
  o.dev_limit = get_or(j, "dev_limit", o.dev_limit);
  if (o.eval_every < 1 || o.checkpoint_every < 1)
    throw std::invalid_argument("eval_every and checkpoint_every must be >= 1");
  auto s = tsot::cmd_train(o);
  std::cout << json{{"initial_valid_loss", s.initial.loss}, {"final_valid_loss", s.final.loss},
                    {"best_step", s.best_step}, {"seconds", s.seconds},
                    {"checkpoint", s.checkpoint}}.dump()
            << '\n';
  return 0;
}

int run_adapt(const json& j) {
  tsot::AdaptOptions o;
  o.model_path = require(j, "model");
  o.text = require(j, "text");
  o.heldout = get_or<std::string>(j, "heldout", "");
  o.out_dir = require(j, "out");
  o.loss = loss_config(j);
  o.optim = optim(j, o.optim);
  o.seed = get_or<std::uint64_t>(j, "seed", o.seed);
  auto s = tsot::cmd_adapt(o);
  std::cout << json{{"initial_nll", s.initial_nll}, {"final_nll", s.final_nll},
                    {"checkpoint", s.checkpoint}}.dump()
            << '\n';
  return 0;
}

int run_decode(const json& j) {
  auto loaded = tsot::load_model(require(j, "model"));
  std::string data = require(j, "data");
  std::string split = require(j, "split");
  std::string out = require(j, "out");
  tsot::Vocabulary vocab = tsot::Vocabulary::load(tsot::vocab_file(data));
  tsot::require_same_vocab(loaded.vocab, vocab, "data directory " + data);
  tsot::DecodeOptions opts;
  opts.beam = get_or(j, "beam", opts.beam);
  opts.max_symbols_per_frame = get_or(j, "max_symbols", opts.max_symbols_per_frame);
  opts.prune_double_cc = get_or(j, "prune_double_cc", opts.prune_double_cc);
  if (opts.beam < 1) throw std::invalid_argument("beam must be >= 1");
  auto utts = tsot::read_split(data, split, vocab);
  auto parent = std::filesystem::path(out).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  auto recs = tsot::decode_utterances(loaded.model, vocab, utts, opts, get_or(j, "threads", 1));
  std::ofstream os(out);
  if (!os) throw std::runtime_error("cannot write '" + out + "'");
  for (const auto& r : recs) os << tsot::to_json(r, vocab).dump() << '\n';
  std::cerr << "decode: " << recs.size() << " utterances, beam " << opts.beam << "\n";
  return 0;
}

int run_score(const json& j) {
  std::string hyp_path = require(j, "hyp");
  std::string ref_path = require(j, "ref");
  std::string out = get_or<std::string>(j, "out", "");
  tsot::HypTexts hyps;
  std::ifstream is(hyp_path);
  if (!is) throw std::runtime_error("cannot open hypotheses '" + hyp_path + "'");
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto r = json::parse(line);
    tsot::ChannelTranscripts ch;
    ch.channels[0] = tsot::normalize_words(r.at("ch0_text").get<std::string>());
    ch.channels[1] = tsot::normalize_words(r.at("ch1_text").get<std::string>());
    hyps[r.at("utt_id").get<std::string>()] = ch;
  }
  auto summary = tsot::score_hypotheses(hyps, tsot::read_transcripts(ref_path));
  std::string table = tsot::score_table(summary);
  std::cout << table;
  if (!out.empty()) {
    tsot::write_run_info(out, "score", j, {hyp_path, ref_path});
    std::ofstream rec(out + "/wer.jsonl");
    for (const auto& r : tsot::score_records(summary)) rec << r.dump() << '\n';
    std::ofstream(out + "/wer.txt") << table;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Factorized transducer for serialized multi-talker recognition"};
  app.require_subcommand(1);
  std::string config;
  app.add_option("--config", config, "JSON file with settings (flags take precedence)");

  struct Command {
    CLI::App* app;
    Overrides ov;
    int (*run)(const json&);
  };
  std::vector<std::unique_ptr<Command>> cmds;
  auto make = [&](const char* name, const char* help, int (*run)(const json&)) {
    cmds.push_back(std::make_unique<Command>(Command{app.add_subcommand(name, help), {}, run}));
    cmds.back()->app->add_option("--config", config, "JSON file with settings");
    return cmds.back().get();
  };

  auto* synth = make("synth-data", "Generate the synthetic corpus", run_synth);
  synth->ov.add<std::string>(synth->app, "--out", "out", "Output directory");
  synth->ov.add<std::uint64_t>(synth->app, "--seed", "seed", "Corpus seed");
  synth->ov.add<int>(synth->app, "--vocab-size", "vocab_size", "Number of words");
  synth->ov.add<int>(synth->app, "--train-utts", "train_utts", "Training utterances");
  synth->ov.add<int>(synth->app, "--dev-utts", "dev_utts", "Validation utterances");
  synth->ov.add<int>(synth->app, "--test-utts", "test_utts", "Utterances per test set");
  synth->ov.add<int>(synth->app, "--lm-text-utts", "lm_text_utts", "General-domain LM sentences");
  synth->ov.add<int>(synth->app, "--adapt-text-utts", "adapt_text_utts", "Shifted-domain sentences");
  synth->ov.add<double>(synth->app, "--mix-prob", "mix_prob", "Probability of a two-speaker mixture");
  synth->ov.add<double>(synth->app, "--noise", "noise_sigma", "Feature noise standard deviation");
  synth->ov.add<std::string>(synth->app, "--tokenization", "tokenization", "word or character");

  auto* lm = make("lm-pretrain", "Pretrain the vocabulary predictor on text", run_lm);
  lm->ov.add<std::string>(lm->app, "--data", "data", "Corpus directory");
  lm->ov.add<std::string>(lm->app, "--out", "out", "Output directory");
  lm->ov.add<std::string>(lm->app, "--text", "text", "Training text (default <data>/lm_text.txt)");
  lm->ov.add<std::string>(lm->app, "--heldout", "heldout", "Held-out text");
  lm->ov.add<std::string>(lm->app, "--variant", "variant", "integrated or naive");
  lm->ov.add<std::string>(lm->app, "--model-config", "model_config", "Model config JSON");
  lm->ov.add<std::uint64_t>(lm->app, "--seed", "seed", "Seed");
  add_optim_flags(lm->app, lm->ov);

  auto* train = make("train", "Train a transducer", run_train);
  train->ov.add<std::string>(train->app, "--data", "data", "Corpus directory");
  train->ov.add<std::string>(train->app, "--out", "out", "Output directory");
  train->ov.add<std::string>(train->app, "--variant", "variant", "integrated, naive or tsot_baseline");
  train->ov.add<std::string>(train->app, "--model-config", "model_config", "Model config JSON");
  train->ov.add<std::uint64_t>(train->app, "--seed", "seed", "Seed");
  train->ov.add<double>(train->app, "--lambda", "lambda", "LM loss weight");
  train->ov.add<std::string>(train->app, "--init-encoder", "init_encoder", "Checkpoint for encoder.*");
  train->ov.add<std::string>(train->app, "--init-predictor", "init_predictor",
                             "Checkpoint for vocab_predictor.* (from lm-pretrain)");
  train->ov.add<std::string>(train->app, "--resume", "resume", "train_state.ckpt to resume from");
  train->ov.add<long>(train->app, "--eval-every", "eval_every", "Validation interval");
  train->ov.add<long>(train->app, "--checkpoint-every", "checkpoint_every", "State checkpoint interval");
  train->ov.add<long>(train->app, "--stop-after", "stop_after", "Stop after this many steps");
  add_optim_flags(train->app, train->ov);

  auto* adapt = make("adapt", "Text-only adaptation of the vocabulary predictor", run_adapt);
  adapt->ov.add<std::string>(adapt->app, "--model", "model", "Trained model checkpoint");
  adapt->ov.add<std::string>(adapt->app, "--text", "text", "Target-domain text");
  adapt->ov.add<std::string>(adapt->app, "--heldout", "heldout", "Target-domain held-out text");
  adapt->ov.add<std::string>(adapt->app, "--out", "out", "Output directory");
  adapt->ov.add<double>(adapt->app, "--omega", "omega", "KL weight");
  adapt->ov.add<std::string>(adapt->app, "--kl-direction", "kl_direction",
                             "original_to_adapted or adapted_to_original");
  adapt->ov.add<std::uint64_t>(adapt->app, "--seed", "seed", "Seed");
  add_optim_flags(adapt->app, adapt->ov);

  auto* dec = make("decode", "Decode a corpus split", run_decode);
  dec->ov.add<std::string>(dec->app, "--model", "model", "Model checkpoint");
  dec->ov.add<std::string>(dec->app, "--data", "data", "Corpus directory");
  dec->ov.add<std::string>(dec->app, "--split", "split", "Split name, e.g. test_general_mixed");
  dec->ov.add<std::string>(dec->app, "--out", "out", "Output JSONL file");
  dec->ov.add<int>(dec->app, "--beam", "beam", "Beam size (1 = greedy)");
  dec->ov.add<int>(dec->app, "--max-symbols", "max_symbols", "Label cap per frame");
  dec->ov.add<int>(dec->app, "--threads", "threads", "Decoding threads");

  auto* score = make("score", "Score decoder output", run_score);
  score->ov.add<std::string>(score->app, "--hyp", "hyp", "Decoder output JSONL");
  score->ov.add<std::string>(score->app, "--ref", "ref", "Reference transcript JSONL");
  score->ov.add<std::string>(score->app, "--out", "out", "Output directory for reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << json{{"error", e.what()}, {"kind", "usage"}}.dump() << '\n';
    return 2;
  }

  for (auto& c : cmds) {
    if (!c->app->parsed()) continue;
    try {
      return c->run(c->ov.apply(config));
    } catch (const std::exception& e) {
      std::cerr << json{{"error", e.what()}, {"command", c->app->get_name()}}.dump() << '\n';
      return 1;
    }
  }
  return 2;
}
