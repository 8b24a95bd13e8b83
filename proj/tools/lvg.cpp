// lvg: command-line front end.
//
//   lvg build-dict --pairs corpus.tsv --out dict.json
//   lvg gen-bench  --out bench/
//   lvg train      --train bench/train.tsv --train-ref bench/train.gold
//                  --dict dict.json --features bench/features.lvf --out run/
//   lvg translate  --model run/ --input bench/test.tsv --out hyp.txt
//   lvg evaluate   --hyp hyp.txt --ref bench/test.gold
//
// Every subcommand also takes --config FILE.json whose keys are flag names
// without the leading dashes; flags given on the command line win.

#include "lvg/checkpoint.hpp"
#include "lvg/corpus.hpp"
#include "lvg/dictionary.hpp"
#include "lvg/errors.hpp"
#include "lvg/eval.hpp"
#include "lvg/experiment.hpp"
#include "lvg/features.hpp"
#include "lvg/training.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace {

using namespace lvg;
namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kRuntimeFailure = 1;
constexpr int kUsageError = 2;

// Splices `--config FILE` into the argument list: every key of the JSON
// object becomes `--key value` unless that flag is already present, so
// command-line flags win. Booleans map to bare flags.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string path;
  std::size_t at = args.size();
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[i + 1];
      at = i;
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      at = i;
      break;
    }
  }
  if (path.empty()) return args;
  args.erase(args.begin() + static_cast<std::ptrdiff_t>(at),
             args.begin() + static_cast<std::ptrdiff_t>(args[at] == "--config" ? at + 2 : at + 1));

  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw CLI::ValidationError("--config", e.what());
  } catch (const IoError& e) {
    throw CLI::ValidationError("--config", e.what());
  }
  if (!j.is_object()) throw CLI::ValidationError("--config", "top level must be a JSON object");
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
  for (const auto& [key, value] : j.items()) {
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    if (value.is_boolean()) {
      if (value.get<bool>()) args.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back(flag);
        args.push_back(scalar(v));
      }
    } else {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  }
  return args;
}

// ------------------------------------------------------------- shared flags

struct TextFlags {
  std::string stoplist = std::string(LVG_DATA_DIR) + "/stopwords-en.txt";
  bool no_stoplist = false;
  std::string merges;
  bool no_lowercase = false;

  void add(CLI::App* app) {
    app->add_option("--stoplist", stoplist, "stop-word file, one word per line")->capture_default_str();
    app->add_flag("--no-stoplist", no_stoplist, "disable stop-word filtering");
    app->add_option("--merges", merges, "BPE merge file; enables bpe mode");
    app->add_flag("--no-lowercase", no_lowercase, "keep case");
  }
  TokenizerConfig tokenizer() const {
    TokenizerConfig cfg;
    cfg.lowercase = !no_lowercase;
    if (!merges.empty()) {
      cfg.mode = TokenizerMode::bpe;
      cfg.merges = load_merges(merges);
    }
    cfg.validate();
    return cfg;
  }
  StopWordList stopwords() const { return no_stoplist ? StopWordList{} : StopWordList::load(stoplist); }
  json to_json() const {
    return {{"stoplist", no_stoplist ? "" : fs::absolute(stoplist).string()},
            {"merges", merges.empty() ? "" : fs::absolute(merges).string()},
            {"lowercase", !no_lowercase}};
  }
};

struct ModelFlags {
  ModelConfig cfg;
  void add(CLI::App* app) {
    app->add_option("--d-model", cfg.d_model)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--enc-layers", cfg.n_layers_enc)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--dec-layers", cfg.n_layers_dec)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--heads", cfg.n_heads)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--d-ff", cfg.d_ff)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--max-len", cfg.max_len)->capture_default_str()->check(CLI::PositiveNumber);
  }
};

struct TrainFlags {
  TrainConfig cfg;
  std::string optimizer = "adam";
  void add(CLI::App* app) {
    app->add_option("--steps", cfg.max_steps, "maximum optimizer steps")->capture_default_str();
    app->add_option("--warmup", cfg.warmup_steps)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--batch", cfg.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--dropout", cfg.dropout)->capture_default_str()->check(CLI::Range(0.0, 0.999));
    app->add_option("--patience", cfg.patience)->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--seed", cfg.seed)->capture_default_str();
    app->add_option("--m", cfg.m, "images per token")->capture_default_str()->check(CLI::PositiveNumber);
    app->add_option("--optimizer", optimizer)->capture_default_str()->check(CLI::IsMember({"adam", "sgd"}));
    app->add_option("--lr-scale", cfg.lr_scale)->capture_default_str()->check(CLI::PositiveNumber);
  }
  TrainConfig resolved() const {
    TrainConfig c = cfg;
    c.optimizer = optimizer == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
    c.validate();
    return c;
  }
};

ParallelCorpus read_corpus(const std::string& pairs, const std::string& refs) {
  ParallelCorpus c;
  c.pairs = load_pairs(pairs);
  c.targets = load_targets(refs);
  if (c.pairs.size() != c.targets.size())
    throw PreconditionError(pairs + " has " + std::to_string(c.pairs.size()) + " sentences but " + refs + " has " +
                            std::to_string(c.targets.size()));
  return c;
}

std::string join(const Sentence& s) {
  std::string out;
  for (const auto& t : s) out += (out.empty() ? "" : " ") + t;
  return out;
}

std::vector<std::size_t> parse_sizes(const std::string& list) {
  std::vector<std::size_t> out;
  std::stringstream in(list);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t v = 0;
    try {
      v = std::stoul(item);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--m-values", "not a number: " + item);
    }
    if (v == 0) throw CLI::ValidationError("--m-values", "m must be >= 1");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--m-values", "empty list");
  return out;
}

// ------------------------------------------------------------ subcommands

struct BuildDict {
  std::string pairs, out;
  TextFlags text;
  void run() const {
    const auto dict = build_dictionary(load_pairs(pairs), text.tokenizer(), text.stopwords());
    save_dictionary(dict, out);
    std::cout << "wrote " << dict.size() << " entries to " << out << '\n';
  }
};

struct Inspect {
  std::string dict, token;
  std::size_t m = 0;
  void run() const {
    const auto d = load_dictionary(dict);
    std::cout << token << ':';
    if (const auto* entry = d.find(token)) {
      const std::size_t limit = m == 0 ? entry->size() : std::min(m, entry->size());
      for (std::size_t i = 0; i < limit; ++i) std::cout << ' ' << (*entry)[i].image_id << '(' << (*entry)[i].count << ')';
    }
    std::cout << '\n';
  }
};

struct Coverage {
  std::string dict, texts;
  TextFlags text;
  void run() const {
    std::vector<std::string> lines;
    for (const auto& line : read_lines(texts)) lines.push_back(line.substr(0, line.find('\t')));
    const double c = coverage(load_dictionary(dict), lines, text.tokenizer(), text.stopwords());
    std::printf("%.4f\n", c);
  }
};

struct GenBench {
  std::string out;
  DisambiguationSpec spec;
  void run() const {
    const auto bench = gen_disambiguation_benchmark(spec);
    save_benchmark(bench, out);
    std::cout << "wrote " << bench.train.size() << " train / " << bench.test.size() << " test sentences to " << out
              << '\n';
  }
};

struct Train {
  std::string train_pairs, train_ref, dev_pairs, dev_ref, dict, features, out;
  double dev_fraction = 0.1;
  std::size_t min_count = 2;
  bool text_only = false;
  TextFlags text;
  ModelFlags model;
  TrainFlags training;

  void run() const {
    const auto tok = text.tokenizer();
    const auto stop = text.stopwords();
    ParallelCorpus fit = read_corpus(train_pairs, train_ref);
    ParallelCorpus dev;
    if (!dev_pairs.empty()) {
      dev = read_corpus(dev_pairs, dev_ref);
    } else {
      const auto n_dev = static_cast<std::size_t>(dev_fraction * static_cast<double>(fit.pairs.size()));
      const auto cut = static_cast<std::ptrdiff_t>(fit.pairs.size() - n_dev);
      dev.pairs.assign(fit.pairs.begin() + cut, fit.pairs.end());
      dev.targets.assign(fit.targets.begin() + cut, fit.targets.end());
      fit.pairs.resize(static_cast<std::size_t>(cut));
      fit.targets.resize(static_cast<std::size_t>(cut));
    }
    const auto vocabs = build_vocabularies(fit, tok, stop, min_count);
    const auto train_set = make_examples(fit, tok, stop, vocabs.src, vocabs.tgt);
    const auto dev_set = make_examples(dev, tok, stop, vocabs.src, vocabs.tgt);

    const bool use_fusion = !text_only;
    if (use_fusion && (dict.empty() || features.empty()))
      throw CLI::ValidationError("train", "--dict and --features are required unless --text-only is set");
    WordImageDictionary d;
    ImageFeatureStore store;
    if (use_fusion) {
      d = load_dictionary(dict);
      store = load_feature_store(features);
    }
    const TrainConfig tc = training.resolved();
    VisualContext visual{&d, &store, tc.m};

    ModelConfig mc = model.cfg;
    mc.vocab_src = static_cast<std::uint32_t>(vocabs.src.size());
    mc.vocab_tgt = static_cast<std::uint32_t>(vocabs.tgt.size());
    std::optional<FusionParameters> fusion;
    if (use_fusion) fusion.emplace(store.dim(), mc.d_model, tc.seed + 1);

    fs::create_directories(out);
    std::string metrics;
    auto result = train(Seq2SeqModel(mc, tc.seed), std::move(fusion), use_fusion ? &visual : nullptr, train_set,
                        dev_set, tc, vocabs.tgt, [&](const MetricsRecord& r) {
                          std::printf("epoch %zu step %zu loss %.4f dev_bleu %.2f lr %.6f\n", r.epoch, r.step,
                                      r.train_loss, r.dev_bleu, r.lr);
                          std::fflush(stdout);
                        });
    save_checkpoint(fs::path(out) / "model.lvm", result.model, result.fusion ? &*result.fusion : nullptr);
    vocabs.src.save(fs::path(out) / "src_vocab.json");
    vocabs.tgt.save(fs::path(out) / "tgt_vocab.json");
    write_file(fs::path(out) / "metrics.jsonl", metrics_to_jsonl(result.log));
    json run = {{"text", text.to_json()},
                {"m", tc.m},
                {"dict", use_fusion ? fs::absolute(dict).string() : ""},
                {"features", use_fusion ? fs::absolute(features).string() : ""}};
    write_file(fs::path(out) / "run.json", run.dump(2) + "\n");
    std::cout << "best dev BLEU " << result.best_dev_bleu << " after " << result.steps << " steps; wrote " << out
              << '\n';
  }
};

struct Translate {
  std::string model_dir, input, out, dict, features;
  std::size_t m = 0;
  std::size_t max_len = 0;
  void run() const {
    const fs::path dir(model_dir);
    const json run = json::parse(read_file(dir / "run.json"));
    TokenizerConfig tok;
    tok.lowercase = run["text"]["lowercase"].get<bool>();
    if (const auto merges = run["text"]["merges"].get<std::string>(); !merges.empty()) {
      tok.mode = TokenizerMode::bpe;
      tok.merges = load_merges(merges);
    }
    const auto stop_path = run["text"]["stoplist"].get<std::string>();
    const StopWordList stop = stop_path.empty() ? StopWordList{} : StopWordList::load(stop_path);
    const auto src_vocab = Vocabulary::load(dir / "src_vocab.json");
    const auto tgt_vocab = Vocabulary::load(dir / "tgt_vocab.json");
    const auto ckpt = load_checkpoint(dir / "model.lvm");

    WordImageDictionary d;
    ImageFeatureStore store;
    VisualContext visual{&d, &store, m ? m : run["m"].get<std::size_t>()};
    if (ckpt.fusion) {
      d = load_dictionary(dict.empty() ? run["dict"].get<std::string>() : dict);
      store = load_feature_store(features.empty() ? run["features"].get<std::string>() : features);
    }
    const std::size_t limit = max_len ? max_len : ckpt.model.config().max_len - 1;
    std::string lines;
    for (const auto& pair : load_pairs(input)) {
      Example ex;
      ex.src_tokens = tokenize(pair.text, tok, stop);
      ex.src = src_vocab.encode(ex.src_tokens);
      const auto ids = translate(ckpt.model, ckpt.fusion ? &*ckpt.fusion : nullptr, ckpt.fusion ? &visual : nullptr,
                                 ex, limit);
      lines += join(tgt_vocab.decode(ids)) + '\n';
    }
    if (out.empty()) {
      std::cout << lines;
    } else {
      write_file(out, lines);
    }
  }
};

struct Evaluate {
  std::string hyp, ref, hyp_b;
  void run() const {
    const auto h = load_targets(hyp);
    const auto r = load_targets(ref);
    std::printf("%.4f\n", bleu4(h, r));
    if (!hyp_b.empty()) {
      const auto hb = load_targets(hyp_b);
      if (hb.size() != r.size()) throw PreconditionError("--hyp-b and --ref differ in line count");
      std::vector<double> a, b;
      for (std::size_t i = 0; i < r.size(); ++i) {
        a.push_back(sentence_bleu(h[i], r[i]));
        b.push_back(sentence_bleu(hb[i], r[i]));
      }
      std::printf("bleu_b %.4f\nsign_test_p %.6g\n", bleu4(hb, r), sign_test(a, b));
    }
  }
};

struct SweepM {
  std::string bench_dir, out, m_values = "1,2,3,4,5,6,7";
  bool text_only = false;
  ModelFlags model;
  TrainFlags training;
  void run() const {
    const auto ms = parse_sizes(m_values);
    const auto bench = load_benchmark(bench_dir);
    std::string csv = "m,bleu,amb_acc\n";
    for (auto m : ms) {
      DisambiguationRunConfig cfg;
      cfg.model = model.cfg;
      cfg.train = training.resolved();
      cfg.train.m = m;
      cfg.fusion = !text_only;
      cfg.init_seed = cfg.train.seed;
      const auto r = run_disambiguation(bench, cfg);
      char row[96];
      std::snprintf(row, sizeof row, "%zu,%.4f,%.4f\n", m, r.bleu, r.ambiguous_accuracy);
      std::cout << row << std::flush;
      csv += row;
    }
    write_file(out, csv);
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"word-level visual guidance toolkit", "lvg"};
  app.require_subcommand(1);

  BuildDict build_dict;
  auto* c_build = app.add_subcommand("build-dict", "build a word-image dictionary from a paired corpus");
  c_build->add_option("--pairs", build_dict.pairs, "sentence<TAB>image_id file")->required()->check(CLI::ExistingFile);
  c_build->add_option("--out", build_dict.out, "dictionary JSON")->required();
  build_dict.text.add(c_build);

  Inspect inspect;
  auto* c_inspect = app.add_subcommand("inspect", "print a token's dictionary entry");
  c_inspect->add_option("--dict", inspect.dict)->required()->check(CLI::ExistingFile);
  c_inspect->add_option("--token", inspect.token)->required();
  c_inspect->add_option("--m", inspect.m, "show at most m images (0: all)");

  Coverage cov;
  auto* c_cov = app.add_subcommand("coverage", "fraction of token occurrences with a dictionary entry");
  c_cov->add_option("--dict", cov.dict)->required()->check(CLI::ExistingFile);
  c_cov->add_option("--texts", cov.texts, "one sentence per line; text after a TAB is ignored")
      ->required()
      ->check(CLI::ExistingFile);
  cov.text.add(c_cov);

  GenBench gen;
  auto* c_gen = app.add_subcommand("gen-bench", "write the synthetic disambiguation benchmark");
  c_gen->add_option("--out", gen.out, "output directory")->required();
  c_gen->add_option("--types", gen.spec.n_ambiguous_types)->capture_default_str();
  c_gen->add_option("--context-vocab", gen.spec.n_context_tokens)->capture_default_str();
  c_gen->add_option("--context-per-sentence", gen.spec.context_per_sentence)->capture_default_str();
  c_gen->add_option("--n-train", gen.spec.n_train)->capture_default_str();
  c_gen->add_option("--n-test", gen.spec.n_test)->capture_default_str();
  c_gen->add_option("--d-img", gen.spec.d_img)->capture_default_str();
  c_gen->add_option("--center-distance", gen.spec.center_distance)->capture_default_str();
  c_gen->add_option("--noise", gen.spec.noise)->capture_default_str();
  c_gen->add_option("--regions", gen.spec.regions)->capture_default_str();
  c_gen->add_option("--seed", gen.spec.seed)->capture_default_str();

  Train tr;
  auto* c_train = app.add_subcommand("train", "train a translation model, with or without visual guidance");
  c_train->add_option("--train", tr.train_pairs, "source sentence<TAB>image_id")->required()->check(CLI::ExistingFile);
  c_train->add_option("--train-ref", tr.train_ref, "target sentences, one per line")
      ->required()
      ->check(CLI::ExistingFile);
  auto* dev_opt = c_train->add_option("--dev", tr.dev_pairs)->check(CLI::ExistingFile);
  auto* dev_ref_opt = c_train->add_option("--dev-ref", tr.dev_ref)->check(CLI::ExistingFile);
  dev_opt->needs(dev_ref_opt);
  dev_ref_opt->needs(dev_opt);
  c_train->add_option("--dev-fraction", tr.dev_fraction, "held-out tail of --train when --dev is absent")
      ->capture_default_str()
      ->check(CLI::Range(0.0, 0.9));
  c_train->add_option("--min-count", tr.min_count, "source tokens rarer than this become <unk>")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  c_train->add_option("--dict", tr.dict)->check(CLI::ExistingFile);
  c_train->add_option("--features", tr.features)->check(CLI::ExistingFile);
  c_train->add_flag("--text-only", tr.text_only, "train the text-only baseline");
  c_train->add_option("--out", tr.out, "output directory")->required();
  tr.text.add(c_train);
  tr.model.add(c_train);
  tr.training.add(c_train);

  Translate tl;
  auto* c_tl = app.add_subcommand("translate", "greedy-decode a source file");
  c_tl->add_option("--model", tl.model_dir, "directory written by train")->required()->check(CLI::ExistingDirectory);
  c_tl->add_option("--input", tl.input, "source sentence<TAB>image_id")->required()->check(CLI::ExistingFile);
  c_tl->add_option("--out", tl.out, "hypothesis file (default: stdout)");
  c_tl->add_option("--dict", tl.dict, "override the training dictionary")->check(CLI::ExistingFile);
  c_tl->add_option("--features", tl.features, "override the training feature file")->check(CLI::ExistingFile);
  c_tl->add_option("--m", tl.m, "override images per token");
  c_tl->add_option("--max-len", tl.max_len, "output length bound (default: model max_len - 1)");

  Evaluate ev;
  auto* c_ev = app.add_subcommand("evaluate", "corpus BLEU-4 and optional sign test");
  c_ev->add_option("--hyp", ev.hyp)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--ref", ev.ref)->required()->check(CLI::ExistingFile);
  c_ev->add_option("--hyp-b", ev.hyp_b, "second system for a paired sign test")->check(CLI::ExistingFile);

  SweepM sw;
  auto* c_sw = app.add_subcommand("sweep-m", "train and evaluate on a benchmark for each m");
  c_sw->add_option("--bench", sw.bench_dir, "directory written by gen-bench")->required()->check(CLI::ExistingDirectory);
  c_sw->add_option("--out", sw.out, "CSV output")->required();
  c_sw->add_option("--m-values", sw.m_values, "comma-separated list")->capture_default_str();
  c_sw->add_flag("--text-only", sw.text_only);
  sw.model.add(c_sw);
  sw.training.add(c_sw);

  std::string config_path;
  for (auto* sub : app.get_subcommands({}))
    sub->add_option("--config", config_path, "JSON file whose keys mirror flag names; flags win");

  try {
    auto args = expand_config(argc, argv);
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsageError;
  }

  try {
    if (c_build->parsed()) build_dict.run();
    if (c_inspect->parsed()) inspect.run();
    if (c_cov->parsed()) cov.run();
    if (c_gen->parsed()) gen.run();
    if (c_train->parsed()) tr.run();
    if (c_tl->parsed()) tl.run();
    if (c_ev->parsed()) ev.run();
    if (c_sw->parsed()) sw.run();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return 0;
}
