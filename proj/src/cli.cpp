// Copyright 2026 The MSMA-TTS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "msma/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "msma/config.hpp"
#include "msma/error.hpp"
#include "msma/evaluation.hpp"
#include "msma/io.hpp"
#include "msma/synthesis.hpp"

namespace msma {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Context {
  RunConfig cfg;
  fs::path dir;
  std::ostream& out;
};

struct Corpus {
  Manifest manifest;
  SpeakerEmbeddingTable speakers;
};

fs::path corpus_dir(const Context& c) { return c.dir / "corpus"; }
fs::path stage1_path(const Context& c) { return c.dir / "stage1" / "model.msck"; }
fs::path stage2_path(const Context& c) { return c.dir / "stage2" / "lapm.msck"; }
fs::path centroid_path(const Context& c) { return c.dir / "centroids.json"; }

void require_file(const fs::path& p, const std::string& producer) {
  if (!fs::exists(p))
    throw Error("missing " + p.string() + " (run '" + producer + "' first)");
}

Corpus load_corpus(const Context& c) {
  const fs::path m = corpus_dir(c) / "manifest.tsv";
  require_file(m, "gen-synthetic' or 'prepare");
  Corpus k{load_manifest(m), load_speaker_embeddings(corpus_dir(c) / "speakers.spk")};
  for (const auto& s : k.manifest.speakers)
    if (!k.speakers.contains(s))
      throw Error("speaker " + s + " has no speaker embedding");
  return k;
}

void write_corpus(const Context& c, Manifest m,
                  const SpeakerEmbeddingTable& speakers) {
  fs::remove_all(corpus_dir(c));
  fs::create_directories(corpus_dir(c));
  save_corpus(m, corpus_dir(c));
  save_speaker_embeddings(speakers, corpus_dir(c) / "speakers.spk");
  c.out << "corpus: " << m.utterances.size() << " utterances, "
        << m.speakers.size() << " speakers, " << m.accents.size()
        << " accents -> " << corpus_dir(c).string() << "\n";
}

std::unique_ptr<MultiScaleModel> build_model(const Context& c,
                                             const Corpus& k) {
  const ModelConfig mc = c.cfg.model.resolve(
      k.manifest.inventory.size(), static_cast<int>(k.manifest.accents.size()),
      static_cast<int>(k.manifest.speakers.size()), k.speakers.dim());
  return std::make_unique<MultiScaleModel>(mc, c.cfg.seed);
}

Checkpoint load_own_checkpoint(const Context& c, const fs::path& p,
                               const std::string& producer) {
  require_file(p, producer);
  Checkpoint ckpt = load_checkpoint(p);
  if (ckpt.config_fingerprint != c.cfg.fingerprint())
    throw Error(p.string() + " was written under a different configuration");
  return ckpt;
}

void load_stage1(const Context& c, MultiScaleModel& model) {
  restore(model.store(), load_own_checkpoint(c, stage1_path(c), "train-stage1"));
}

void load_stage2(const Context& c, MultiScaleModel& model) {
  const Checkpoint ckpt =
      load_own_checkpoint(c, stage2_path(c), "train-stage2");
  restore(model.store(), ckpt);
  model.lapm().set_encoder_fingerprint(ckpt.encoder_fingerprint);
  model.lapm().verify_encoder(model.store());
}

std::vector<int> parse_phonemes(const Manifest& m, const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> symbols;
  for (std::string s; in >> s;) symbols.push_back(s);
  if (symbols.empty())
    throw ConfigError("request.phonemes is empty");
  return m.inventory.encode(symbols);
}

const Matrix& speaker_row(const Corpus& k, const std::string& speaker) {
  if (speaker.empty()) throw ConfigError("request.speaker is empty");
  if (!k.speakers.contains(speaker))
    throw Error("unknown speaker '" + speaker + "'");
  return k.speakers.get(speaker);
}

SynthesisOptions synth_options(const Context& c) {
  SynthesisOptions o;
  o.max_steps = c.cfg.synthesis.max_steps;
  o.seed = c.cfg.seed;
  return o;
}

std::string request_name(const Context& c) {
  const std::string& n = c.cfg.request.name;
  if (n.empty() || n.find_first_of("/\\") != std::string::npos || n[0] == '.')
    throw ConfigError("request.name must be a plain file stem");
  return n;
}

void write_synthesis(const Context& c, const SynthesisResult& r,
                     const json& meta) {
  const std::string name = request_name(c);
  const fs::path dir = c.dir / "synth";
  fs::create_directories(dir);
  io::write_matrix_file(dir / (name + ".mel"), r.mel);
  json j = meta;
  j["frames"] = r.mel.rows();
  j["hit_max_steps"] = r.hit_max_steps;
  io::write_text_file(dir / (name + ".json"), j.dump(2) + "\n");
  if (c.cfg.synthesis.write_wav)
    write_wav(dir / (name + ".wav"),
              griffin_lim(r.mel, c.cfg.synthesis.gl_iterations, c.cfg.seed,
                          c.cfg.mel),
              c.cfg.mel.sample_rate);
  c.out << "synth: " << r.mel.rows() << " frames"
        << (r.hit_max_steps ? " (hit max steps)" : "") << " -> "
        << (dir / (name + ".mel")).string() << "\n";
}

// ---------------------------------------------------------------------------
// Commands

void cmd_gen_synthetic(Context& c) {
  if (c.cfg.corpus.source != "synthetic")
    throw ConfigError("gen-synthetic needs corpus.source = \"synthetic\"");
  auto [m, speakers] = generate_synthetic_corpus(c.cfg.synthetic.spec());
  m = split_dataset(std::move(m), c.cfg.corpus.val_per_speaker,
                    c.cfg.corpus.test_per_speaker, c.cfg.corpus.split_seed);
  write_corpus(c, std::move(m), speakers);
}

void cmd_prepare(Context& c) {
  if (c.cfg.corpus.source != "manifest")
    throw ConfigError("prepare needs corpus.source = \"manifest\"");
  Manifest m = load_manifest(c.cfg.corpus.manifest);
  const SpeakerEmbeddingTable speakers =
      load_speaker_embeddings(c.cfg.corpus.speaker_embeddings);
  for (const auto& s : m.speakers)
    if (!speakers.contains(s))
      throw Error("speaker " + s + " has no speaker embedding");
  const bool tagged = std::all_of(
      m.utterances.begin(), m.utterances.end(),
      [](const Utterance& u) { return u.split != Split::kUnassigned; });
  if (!tagged)
    m = split_dataset(std::move(m), c.cfg.corpus.val_per_speaker,
                      c.cfg.corpus.test_per_speaker, c.cfg.corpus.split_seed);
  SpeakerEmbeddingTable kept(speakers.dim());
  for (const auto& s : m.speakers) kept.add(s, speakers.get(s));
  write_corpus(c, std::move(m), kept);
}

void cmd_train_stage1(Context& c) {
  const Corpus k = load_corpus(c);
  auto model = build_model(c, k);
  fs::create_directories(c.dir / "stage1");
  std::ofstream log(c.dir / "stage1" / "loss.tsv", std::ios::binary);
  const TrainConfig tc = c.cfg.train_config();
  train_stage1(*model, k.manifest, k.speakers, c.cfg.loss, tc,
               c.cfg.canonical(), &log, [&](int step, const Checkpoint& ckpt) {
                 const fs::path p =
                     step == tc.stage1_steps
                         ? stage1_path(c)
                         : c.dir / "stage1" /
                               ("step-" + std::to_string(step) + ".msck");
                 save_checkpoint(ckpt, p);
               });
  if (!log) throw Error("cannot write stage-1 loss log");
  c.out << "train-stage1: " << tc.stage1_steps << " steps -> "
        << stage1_path(c).string() << "\n";
}

void cmd_extract_targets(Context& c) {
  const Corpus k = load_corpus(c);
  auto model = build_model(c, k);
  load_stage1(c, *model);
  const auto targets = extract_targets(*model, k.manifest);
  fs::remove_all(c.dir / "targets");
  save_targets(targets, c.dir / "targets");
  c.out << "extract-targets: " << targets.size() << " utterances -> "
        << (c.dir / "targets").string() << "\n";
}

void cmd_train_stage2(Context& c) {
  const Corpus k = load_corpus(c);
  auto model = build_model(c, k);
  load_stage1(c, *model);
  require_file(c.dir / "targets" / "ids.txt", "extract-targets");
  auto targets = load_targets(c.dir / "targets");
  fs::create_directories(c.dir / "stage2");
  std::ofstream log(c.dir / "stage2" / "loss.tsv", std::ios::binary);
  const TrainConfig tc = c.cfg.train_config();
  train_stage2(*model, k.manifest, std::move(targets), tc, c.cfg.canonical(),
               &log, [&](int step, const Checkpoint& ckpt) {
                 const fs::path p =
                     step == tc.stage2_steps
                         ? stage2_path(c)
                         : c.dir / "stage2" /
                               ("step-" + std::to_string(step) + ".msck");
                 save_checkpoint(ckpt, p);
               });
  if (!log) throw Error("cannot write stage-2 loss log");
  c.out << "train-stage2: " << tc.stage2_steps << " steps -> "
        << stage2_path(c).string() << "\n";
}

void cmd_centroids(Context& c) {
  const Corpus k = load_corpus(c);
  auto model = build_model(c, k);
  load_stage1(c, *model);
  const auto table = compute_accent_centroids(
      *model, k.manifest, c.cfg.synthesis.renormalize_centroids);
  save_centroids(table, centroid_path(c));
  c.out << "centroids: " << table.accents().size() << " accents -> "
        << centroid_path(c).string() << "\n";
}

void cmd_synth(Context& c) {
  const Corpus k = load_corpus(c);
  const RequestSection& rq = c.cfg.request;
  const std::vector<int> phonemes = parse_phonemes(k.manifest, rq.phonemes);
  if (rq.accent.empty()) throw ConfigError("request.accent is empty");
  require_file(centroid_path(c), "centroids");
  const auto table = load_centroids(centroid_path(c));
  table.get(rq.accent);
  const Matrix& speaker = speaker_row(k, rq.speaker);
  auto model = build_model(c, k);
  load_stage1(c, *model);
  load_stage2(c, *model);
  const auto r = synthesize(*model, phonemes, rq.accent, speaker, table,
                            synth_options(c));
  write_synthesis(c, r,
                  {{"mode", "lapm"},
                   {"phonemes", rq.phonemes},
                   {"accent", rq.accent},
                   {"speaker", rq.speaker}});
}

void cmd_synth_ref(Context& c) {
  const Corpus k = load_corpus(c);
  const RequestSection& rq = c.cfg.request;
  if (rq.reference.empty()) throw ConfigError("request.reference is empty");
  const auto it = std::find_if(
      k.manifest.utterances.begin(), k.manifest.utterances.end(),
      [&](const Utterance& u) { return u.id == rq.reference; });
  if (it == k.manifest.utterances.end())
    throw Error("unknown reference utterance '" + rq.reference + "'");
  const std::string speaker_name =
      rq.speaker.empty()
          ? k.manifest.speakers[static_cast<std::size_t>(it->speaker)]
          : rq.speaker;
  const Matrix& speaker = speaker_row(k, speaker_name);
  auto model = build_model(c, k);
  load_stage1(c, *model);
  const auto r = synthesize_with_reference(*model, it->phonemes, it->mel,
                                           it->boundaries, speaker,
                                           synth_options(c));
  write_synthesis(c, r,
                  {{"mode", "reference"},
                   {"reference", rq.reference},
                   {"speaker", speaker_name}});
}

void cmd_evaluate(Context& c) {
  const Corpus k = load_corpus(c);
  auto model = build_model(c, k);
  load_stage1(c, *model);
  load_stage2(c, *model);
  require_file(centroid_path(c), "centroids");
  const auto table = load_centroids(centroid_path(c));
  auto utts = k.manifest.select(parse_split(c.cfg.evaluation.split));
  const auto limit = static_cast<std::size_t>(c.cfg.evaluation.max_utterances);
  if (limit > 0 && utts.size() > limit) utts.resize(limit);
  if (utts.empty())
    throw Error("no utterances in split '" + c.cfg.evaluation.split + "'");

  const int gl = c.cfg.evaluation.gl_iterations;
  std::vector<PairMetrics> pairs;
  std::map<int, std::vector<Matrix>> generated_hg;
  int stalled = 0;
  for (const Utterance* u : utts) {
    const auto& accent = k.manifest.accents[static_cast<std::size_t>(u->accent)];
    const auto& spk = k.manifest.speakers[static_cast<std::size_t>(u->speaker)];
    const auto r = synthesize(*model, u->phonemes, accent, k.speakers.get(spk),
                              table, synth_options(c));
    stalled += r.hit_max_steps;
    pairs.push_back(evaluate_pair(
        u->id, r.mel, u->mel, f0_from_mel(r.mel, gl, c.cfg.seed, c.cfg.mel),
        f0_from_mel(u->mel, gl, c.cfg.seed, c.cfg.mel),
        c.cfg.evaluation.voiced_only));
    Graph g(false);
    generated_hg[u->accent].push_back(
        model->sigam()
            .encode(g, g.constant(model->normalize_mel(r.mel)), nullptr)
            .value());
  }

  std::vector<ScoreLine> extra;
  extra.push_back({"hit_max_steps", static_cast<double>(stalled)});
  std::vector<std::string> names;
  std::vector<Matrix> groups;
  bool complete = true;
  for (const auto& [accent, rows] : generated_hg) {
    if (rows.size() < 2) {
      complete = false;
      break;
    }
    Matrix gm(static_cast<Eigen::Index>(rows.size()), rows.front().cols());
    for (std::size_t i = 0; i < rows.size(); ++i)
      gm.row(static_cast<Eigen::Index>(i)) = rows[i];
    names.push_back(k.manifest.accents[static_cast<std::size_t>(accent)]);
    groups.push_back(std::move(gm));
  }
  if (complete && !groups.empty()) {
    const auto aecs = aecs_report(names, groups);
    for (std::size_t i = 0; i < names.size(); ++i)
      extra.push_back({"aecs_" + names[i], aecs.scores[i]});
    extra.push_back({"aecs_avg", aecs.average});
  }
  fs::create_directories(c.dir / "eval");
  io::write_text_file(c.dir / "eval" / "report.tsv", format_report(pairs, extra));
  double mcd_sum = 0.0;
  for (const auto& p : pairs) mcd_sum += p.mcd_db;
  c.out << "evaluate: " << pairs.size() << " utterances, mean MCD "
        << mcd_sum / static_cast<double>(pairs.size()) << " dB -> "
        << (c.dir / "eval" / "report.tsv").string() << "\n";
}

void cmd_export_emb(Context& c) {
  const EmbeddingKind kind = parse_embedding_kind(c.cfg.request.embedding);
  const Corpus k = load_corpus(c);
  auto model = build_model(c, k);
  load_stage1(c, *model);
  fs::create_directories(c.dir / "embeddings");
  const fs::path p = c.dir / "embeddings" / (c.cfg.request.embedding + ".csv");
  io::write_text_file(p, export_embeddings(*model, k.manifest, kind));
  c.out << "export-emb: " << k.manifest.utterances.size() << " rows -> "
        << p.string() << "\n";
}

struct Command {
  const char* name;
  const char* help;
  void (*run)(Context&);
};

constexpr Command kCommands[] = {
    {"gen-synthetic", "Generate and split the synthetic accented corpus",
     cmd_gen_synthetic},
    {"prepare", "Validate, split and import a manifest corpus", cmd_prepare},
    {"train-stage1", "Train the acoustic and accent models", cmd_train_stage1},
    {"extract-targets", "Extract H_G / H_L targets for the train split",
     cmd_extract_targets},
    {"train-stage2", "Train the local accent predictor", cmd_train_stage2},
    {"centroids", "Compute per-accent H_G centroids", cmd_centroids},
    {"synth", "Synthesize request.phonemes in request.accent", cmd_synth},
    {"synth-ref", "Synthesize with embeddings from request.reference",
     cmd_synth_ref},
    {"evaluate", "Objective metrics on the evaluation split", cmd_evaluate},
    {"export-emb", "Export per-utterance embeddings as CSV", cmd_export_emb},
};

void error_record(std::ostream& err, const std::string& kind,
                  const std::string& command, const std::string& message) {
  json j;
  j["error"] = {{"kind", kind}, {"command", command}, {"message", message}};
  err << j.dump() << "\n";
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Multi-scale accent modelling text-to-speech toolkit", "msma"};
  app.require_subcommand(1, 1);
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  for (const Command& cmd : kCommands) {
    CLI::App* sc = app.add_subcommand(cmd.name, cmd.help);
    sc->add_option("-c,--config", config_path, "Run configuration (JSON)")
        ->required();
    sc->add_option("--set", sets, "Override, dotted.key=value (repeatable)")
        ->expected(1)
        ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
    sc->add_option("--seed", seed, "Shorthand for --set seed=N");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!args.empty() && !args.front().empty() && args.front()[0] != '-' &&
      std::none_of(std::begin(kCommands), std::end(kCommands),
                   [&](const Command& c) { return args.front() == c.name; })) {
    const std::string message = "unknown command '" + args.front() + "'";
    err << message << "\n" << app.help();
    error_record(err, "usage", args.front(), message);
    return kExitConfig;
  }
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n" << app.help();
    error_record(err, "usage", args.empty() ? "" : args.front(), e.what());
    return kExitConfig;
  }

  const Command* chosen = nullptr;
  for (const Command& cmd : kCommands)
    if (app.got_subcommand(cmd.name)) chosen = &cmd;
  try {
    Context c{load_run_config(config_path, sets, seed), {}, out};
    c.dir = c.cfg.run_dir();
    fs::create_directories(c.dir);
    io::write_text_file(c.dir / "config.json", c.cfg.document() + "\n");
    chosen->run(c);
  } catch (const ConfigError& e) {
    error_record(err, "config", chosen->name, e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    error_record(err, "runtime", chosen->name, e.what());
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace msma
