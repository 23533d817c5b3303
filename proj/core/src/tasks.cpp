#include "pfi/tasks.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "pfi/errors.hpp"

namespace pfi {

namespace {

// ---- persona pools -----------------------------------------------------------

constexpr int kPersonaAttrs = 40;
constexpr int kCoreAttrs = 12;  // short personas draw from these
constexpr int kValuesPerAttr = 12;

const std::array<const char*, kPersonaAttrs> kAttrWords = {
    "hobby",    "color",  "food",   "drink",   "sport",   "animal",  "city",
    "job",      "season", "instrument", "fruit", "flower", "metal",  "gem",
    "planet",   "language", "dance", "bird",   "fish",    "tree",    "game",
    "subject",  "vehicle", "country", "weather", "month",  "spice",  "fabric",
    "shape",    "tool",   "dish",   "candy",   "song",    "style",   "craft",
    "stone",    "river",  "mountain", "island", "valley"};

// Natural value pools for the twelve core attributes; pools are disjoint.
const std::array<std::array<const char*, kValuesPerAttr>, kCoreAttrs> kCoreValues = {{
    {"chess", "hiking", "painting", "fishing", "dancing", "reading", "sailing",
     "gardening", "cooking", "singing", "knitting", "cycling"},
    {"red", "blue", "green", "yellow", "purple", "orange", "pink", "brown",
     "black", "white", "teal", "maroon"},
    {"pizza", "pasta", "sushi", "salad", "soup", "bread", "cheese", "curry",
     "stew", "tacos", "noodles", "pancakes"},
    {"coffee", "tea", "juice", "soda", "milk", "cocoa", "lemonade", "cider",
     "water", "smoothie", "espresso", "latte"},
    {"soccer", "tennis", "golf", "rugby", "cricket", "boxing", "skiing",
     "rowing", "surfing", "karate", "judo", "volleyball"},
    {"dog", "cat", "horse", "rabbit", "turtle", "parrot", "hamster", "goat",
     "sheep", "llama", "ferret", "pony"},
    {"paris", "london", "tokyo", "madrid", "rome", "berlin", "oslo", "cairo",
     "sydney", "toronto", "dublin", "vienna"},
    {"teacher", "doctor", "farmer", "baker", "pilot", "nurse", "lawyer",
     "chef", "actor", "writer", "singer", "painter"},
    {"spring", "summer", "autumn", "winter", "frost", "thaw", "harvest",
     "bloom", "solstice", "equinox", "monsoon", "drought"},
    {"piano", "guitar", "violin", "drums", "flute", "cello", "trumpet",
     "harp", "banjo", "oboe", "clarinet", "saxophone"},
    {"apple", "banana", "mango", "cherry", "grape", "peach", "plum", "kiwi",
     "lemon", "melon", "papaya", "apricot"},
    {"rose", "tulip", "daisy", "lily", "orchid", "iris", "sunflower", "poppy",
     "jasmine", "lavender", "peony", "marigold"},
}};

// Extended attributes take synthetic two-syllable values, unique by index.
const std::array<const char*, 18> kSylA = {"za", "mi", "ru", "ko", "ve", "ta",
                                           "lo", "ni", "pe", "su", "ga", "re",
                                           "do", "fa", "ki", "mu", "be", "ho"};
const std::array<const char*, 19> kSylB = {"ra", "lo", "vi", "ne", "tu", "ka",
                                           "mi", "du", "pa", "se", "go", "ri",
                                           "da", "fu", "ke", "mo", "bi", "hu",
                                           "zo"};

std::string persona_value_word(int attr, int value_index) {
  if (attr < kCoreAttrs) return kCoreValues[static_cast<size_t>(attr)]
                                          [static_cast<size_t>(value_index)];
  const int i = (attr - kCoreAttrs) * kValuesPerAttr + value_index;
  return std::string(kSylA[static_cast<size_t>(i % 18)]) +
         kSylB[static_cast<size_t>(i / 18)];
}

const std::array<const char*, 6> kPersonaGrammar = {"my", "is", "what", "your", ".", "?"};

// ---- schema pools ------------------------------------------------------------

constexpr int kTableConcepts = 12;
constexpr int kColumnConcepts = 12;
constexpr int kTableIds = 10;
constexpr int kColumnIds = 12;
constexpr int kSchemaValues = 12;
constexpr int kMinCols = 2;
constexpr int kMaxCols = 4;

const std::array<const char*, kTableConcepts> kTableWords = {
    "customers", "orders", "products", "employees", "students", "movies",
    "books",     "flights", "hotels",  "cars",      "teams",    "songs"};
const std::array<const char*, kColumnConcepts> kColumnWords = {
    "name", "age", "city", "price", "year", "rating", "weight", "status",
    "country", "brand", "size", "title"};
const std::array<const char*, kSchemaValues> kSchemaValueWords = {
    "red", "blue", "small", "big", "old", "new", "cheap", "fast", "cold",
    "warm", "light", "dark"};
const std::array<const char*, 16> kSchemaGrammar = {
    "table", "means", "has", "meaning", ".", "show", "the", "of", "whose",
    "is", "?", "select", "from", "where", "=", "all"};

// ---- instruction pools ---------------------------------------------------------

const std::array<const char*, 30> kInstructionNouns = {
    "apple",  "river",  "stone",  "cloud",  "chair",  "brick",  "candle",
    "garden", "ladder", "mirror", "pencil", "basket", "button", "carpet",
    "engine", "feather", "hammer", "island", "jacket", "kettle", "lantern",
    "magnet", "needle", "orange", "pillow", "rocket", "saddle", "tunnel",
    "violin", "wagon"};
const std::array<const char*, 10> kInstructionGrammar = {
    "answer", "yes", "if", "the", "text", "has", "otherwise", "no", ".", ":"};

std::vector<std::string> persona_words() {
  std::vector<std::string> words;
  for (const char* w : kPersonaGrammar) words.emplace_back(w);
  for (const char* w : kAttrWords) words.emplace_back(w);
  for (int a = 0; a < kPersonaAttrs; ++a)
    for (int v = 0; v < kValuesPerAttr; ++v) words.push_back(persona_value_word(a, v));
  return words;
}

std::vector<std::string> schema_words() {
  std::vector<std::string> words;
  for (const char* w : kSchemaGrammar) words.emplace_back(w);
  for (const char* w : kTableWords) words.emplace_back(w);
  for (const char* w : kColumnWords) words.emplace_back(w);
  for (int t = 0; t < kTableIds; ++t) words.push_back("tab" + std::to_string(t));
  for (int c = 0; c < kColumnIds; ++c) words.push_back("col" + std::to_string(c));
  for (const char* w : kSchemaValueWords) words.emplace_back(w);
  return words;
}

std::vector<std::string> instruction_words() {
  std::vector<std::string> words;
  for (const char* w : kInstructionGrammar) words.emplace_back(w);
  for (const char* w : kInstructionNouns) words.emplace_back(w);
  return words;
}

void require_counts(int n_train, int n_heldout, int a, int b) {
  if (n_train < 1 || n_heldout < 1 || a < 1 || b < 1)
    throw ContractViolation("task generator: all counts must be >= 1");
}

}  // namespace

Vocabulary persona_vocabulary() { return Vocabulary(persona_words(), kTaskSentinels); }
Vocabulary schema_vocabulary() { return Vocabulary(schema_words(), kTaskSentinels); }
Vocabulary instruction_vocabulary() {
  return Vocabulary(instruction_words(), kTaskSentinels);
}

Vocabulary vocabulary_for_task(const std::string& task_name) {
  if (task_name == "persona") return persona_vocabulary();
  if (task_name == "schema") return schema_vocabulary();
  if (task_name == "instruction") return instruction_vocabulary();
  throw ContractViolation("unknown task name '" + task_name + "'");
}

void TaskSuite::validate() const {
  if (name.empty()) throw ContractViolation("task suite: empty name");
  std::set<std::string> train_ids;
  for (const auto& pe : train_prompts) {
    pe.prompt.validate();
    train_ids.insert(pe.prompt.id);
  }
  for (const auto& pe : heldout_prompts) {
    pe.prompt.validate();
    if (train_ids.count(pe.prompt.id))
      throw ContractViolation("task suite: held-out prompt id collides with train: " +
                              pe.prompt.id);
  }
  for (const auto* split : {&train_prompts, &heldout_prompts})
    for (const auto& pe : *split)
      for (const auto& ex : pe.examples)
        if (ex.input.empty() || ex.output.empty())
          throw ContractViolation("task suite: empty example field");
}

// ---- persona generator ---------------------------------------------------------

namespace {

struct PersonaFact {
  int attr;
  int value;
};

std::vector<PersonaFact> draw_persona(Rng& rng, int facts, PersonaPool pool) {
  const int n_attrs = pool == PersonaPool::kCore ? kCoreAttrs : kPersonaAttrs;
  if (facts > n_attrs)
    throw ContractViolation("persona: facts_per_persona exceeds attribute pool");
  std::vector<int> attrs(static_cast<size_t>(n_attrs));
  for (int i = 0; i < n_attrs; ++i) attrs[static_cast<size_t>(i)] = i;
  rng.shuffle(attrs);
  std::vector<PersonaFact> out;
  for (int f = 0; f < facts; ++f)
    out.push_back({attrs[static_cast<size_t>(f)], rng.uniform_int(kValuesPerAttr)});
  return out;
}

PromptExamples render_persona(const Vocabulary& vocab, const std::vector<PersonaFact>& facts,
                              int examples_per_prompt, const std::string& id, Rng& rng) {
  PromptExamples pe;
  pe.prompt.id = id;
  for (const PersonaFact& f : facts) {
    pe.prompt.tokens.push_back(vocab.id_of("my"));
    pe.prompt.tokens.push_back(vocab.id_of(kAttrWords[static_cast<size_t>(f.attr)]));
    pe.prompt.tokens.push_back(vocab.id_of("is"));
    pe.prompt.tokens.push_back(vocab.id_of(persona_value_word(f.attr, f.value)));
    pe.prompt.tokens.push_back(vocab.id_of("."));
  }
  std::vector<int> order(facts.size());
  for (size_t i = 0; i < facts.size(); ++i) order[i] = static_cast<int>(i);
  rng.shuffle(order);
  for (int e = 0; e < examples_per_prompt; ++e) {
    const PersonaFact& f = facts[static_cast<size_t>(order[static_cast<size_t>(e) % facts.size()])];
    TaskExample ex;
    ex.input = {vocab.id_of("what"), vocab.id_of("is"), vocab.id_of("your"),
                vocab.id_of(kAttrWords[static_cast<size_t>(f.attr)]), vocab.id_of("?")};
    ex.output = {vocab.id_of(persona_value_word(f.attr, f.value))};
    pe.examples.push_back(std::move(ex));
  }
  return pe;
}

}  // namespace

TaskSuite gen_persona_task(uint64_t seed, int n_train_prompts, int n_heldout_prompts,
                           int facts_per_persona, int examples_per_prompt,
                           PersonaPool pool) {
  require_counts(n_train_prompts, n_heldout_prompts, facts_per_persona,
                 examples_per_prompt);
  const Vocabulary vocab = persona_vocabulary();
  Rng rng(seed);
  TaskSuite suite;
  suite.name = "persona";
  suite.metric = TaskMetric::kPerplexity;
  suite.direction = MetricDirection::kLowerBetter;
  for (int i = 0; i < n_train_prompts; ++i)
    suite.train_prompts.push_back(render_persona(
        vocab, draw_persona(rng, facts_per_persona, pool), examples_per_prompt,
        "train/persona-" + std::to_string(i), rng));
  for (int i = 0; i < n_heldout_prompts; ++i)
    suite.heldout_prompts.push_back(render_persona(
        vocab, draw_persona(rng, facts_per_persona, pool), examples_per_prompt,
        "heldout/persona-" + std::to_string(i), rng));
  suite.validate();
  return suite;
}

PromptExamples gen_persona_prompt(uint64_t seed, int n_facts, const std::string& id) {
  if (n_facts < 1) throw ContractViolation("gen_persona_prompt: n_facts must be >= 1");
  const Vocabulary vocab = persona_vocabulary();
  Rng rng(seed);
  const auto facts = draw_persona(rng, n_facts, PersonaPool::kExtended);
  return render_persona(vocab, facts, n_facts, id, rng);
}

// ---- schema generator -----------------------------------------------------------

namespace {

struct SchemaColumn {
  int concept_index;
  int col_id;
};

struct SchemaTable {
  int concept_index;
  int tab_id;
  std::vector<SchemaColumn> columns;
};

std::vector<SchemaTable> draw_schema(Rng& rng, int tables) {
  if (tables < 1 || tables * kMaxCols > kColumnIds)
    throw ContractViolation("schema: tables_per_schema must be in [1, 3]");
  std::vector<int> table_concepts(kTableConcepts), tab_ids(kTableIds), col_ids(kColumnIds);
  for (int i = 0; i < kTableConcepts; ++i) table_concepts[static_cast<size_t>(i)] = i;
  for (int i = 0; i < kTableIds; ++i) tab_ids[static_cast<size_t>(i)] = i;
  for (int i = 0; i < kColumnIds; ++i) col_ids[static_cast<size_t>(i)] = i;
  rng.shuffle(table_concepts);
  rng.shuffle(tab_ids);
  rng.shuffle(col_ids);
  std::vector<SchemaTable> out;
  size_t next_col_id = 0;
  for (int t = 0; t < tables; ++t) {
    SchemaTable table;
    table.concept_index = table_concepts[static_cast<size_t>(t)];
    table.tab_id = tab_ids[static_cast<size_t>(t)];
    const int n_cols = kMinCols + rng.uniform_int(kMaxCols - kMinCols + 1);
    std::vector<int> col_concepts(kColumnConcepts);
    for (int i = 0; i < kColumnConcepts; ++i) col_concepts[static_cast<size_t>(i)] = i;
    rng.shuffle(col_concepts);
    for (int c = 0; c < n_cols; ++c)
      table.columns.push_back({col_concepts[static_cast<size_t>(c)],
                               col_ids[next_col_id++]});
    out.push_back(std::move(table));
  }
  return out;
}

PromptExamples render_schema(const Vocabulary& vocab, const std::vector<SchemaTable>& schema,
                             int examples_per_prompt, const std::string& id, Rng& rng) {
  PromptExamples pe;
  pe.prompt.id = id;
  auto tab_token = [&](int t) { return vocab.id_of("tab" + std::to_string(t)); };
  auto col_token = [&](int c) { return vocab.id_of("col" + std::to_string(c)); };
  for (const SchemaTable& t : schema) {
    pe.prompt.tokens.push_back(vocab.id_of("table"));
    pe.prompt.tokens.push_back(tab_token(t.tab_id));
    pe.prompt.tokens.push_back(vocab.id_of("means"));
    pe.prompt.tokens.push_back(vocab.id_of(kTableWords[static_cast<size_t>(t.concept_index)]));
    pe.prompt.tokens.push_back(vocab.id_of("."));
    for (const SchemaColumn& c : t.columns) {
      pe.prompt.tokens.push_back(tab_token(t.tab_id));
      pe.prompt.tokens.push_back(vocab.id_of("has"));
      pe.prompt.tokens.push_back(col_token(c.col_id));
      pe.prompt.tokens.push_back(vocab.id_of("meaning"));
      pe.prompt.tokens.push_back(vocab.id_of(kColumnWords[static_cast<size_t>(c.concept_index)]));
      pe.prompt.tokens.push_back(vocab.id_of("."));
    }
  }
  for (int e = 0; e < examples_per_prompt; ++e) {
    const SchemaTable& t = schema[static_cast<size_t>(rng.uniform_int(
        static_cast<int>(schema.size())))];
    const int ci = rng.uniform_int(static_cast<int>(t.columns.size()));
    const SchemaColumn& c = t.columns[static_cast<size_t>(ci)];
    TaskExample ex;
    const bool with_where = rng.uniform01() < 0.5 && t.columns.size() >= 2;
    ex.input = {vocab.id_of("show"), vocab.id_of("the"),
                vocab.id_of(kColumnWords[static_cast<size_t>(c.concept_index)]),
                vocab.id_of("of"),
                vocab.id_of(kTableWords[static_cast<size_t>(t.concept_index)])};
    ex.output = {vocab.id_of("select"), col_token(c.col_id), vocab.id_of("from"),
                 tab_token(t.tab_id)};
    if (with_where) {
      int cj = rng.uniform_int(static_cast<int>(t.columns.size()) - 1);
      if (cj >= ci) ++cj;
      const SchemaColumn& c2 = t.columns[static_cast<size_t>(cj)];
      const int v = rng.uniform_int(kSchemaValues);
      ex.input.push_back(vocab.id_of("whose"));
      ex.input.push_back(vocab.id_of(kColumnWords[static_cast<size_t>(c2.concept_index)]));
      ex.input.push_back(vocab.id_of("is"));
      ex.input.push_back(vocab.id_of(kSchemaValueWords[static_cast<size_t>(v)]));
      ex.output.push_back(vocab.id_of("where"));
      ex.output.push_back(col_token(c2.col_id));
      ex.output.push_back(vocab.id_of("="));
      ex.output.push_back(vocab.id_of(kSchemaValueWords[static_cast<size_t>(v)]));
    }
    ex.input.push_back(vocab.id_of("?"));
    pe.examples.push_back(std::move(ex));
  }
  return pe;
}

}  // namespace

TaskSuite gen_schema_task(uint64_t seed, int n_train_prompts, int n_heldout_prompts,
                          int tables_per_schema, int examples_per_prompt) {
  require_counts(n_train_prompts, n_heldout_prompts, tables_per_schema,
                 examples_per_prompt);
  const Vocabulary vocab = schema_vocabulary();
  Rng rng(seed);
  TaskSuite suite;
  suite.name = "schema";
  suite.metric = TaskMetric::kExactMatch;
  suite.direction = MetricDirection::kHigherBetter;
  for (int i = 0; i < n_train_prompts; ++i)
    suite.train_prompts.push_back(
        render_schema(vocab, draw_schema(rng, tables_per_schema), examples_per_prompt,
                      "train/schema-" + std::to_string(i), rng));
  for (int i = 0; i < n_heldout_prompts; ++i)
    suite.heldout_prompts.push_back(
        render_schema(vocab, draw_schema(rng, tables_per_schema), examples_per_prompt,
                      "heldout/schema-" + std::to_string(i), rng));
  suite.validate();
  return suite;
}

// ---- instruction generator -------------------------------------------------------

TaskSuite gen_instruction_task(uint64_t seed, int n_train_prompts, int n_heldout_prompts,
                               int words_per_input, int examples_per_prompt) {
  require_counts(n_train_prompts, n_heldout_prompts, words_per_input,
                 examples_per_prompt);
  if (words_per_input >= static_cast<int>(kInstructionNouns.size()))
    throw ContractViolation("instruction: words_per_input too large for the pool");
  const Vocabulary vocab = instruction_vocabulary();
  Rng rng(seed);
  TaskSuite suite;
  suite.name = "instruction";
  suite.metric = TaskMetric::kExactMatch;
  suite.direction = MetricDirection::kHigherBetter;
  auto gen_split = [&](int count, const std::string& prefix,
                       std::vector<PromptExamples>& out) {
    for (int i = 0; i < count; ++i) {
      const int rule_word = rng.uniform_int(static_cast<int>(kInstructionNouns.size()));
      PromptExamples pe;
      pe.prompt.id = prefix + std::to_string(i);
      for (const char* w : {"answer", "yes", "if", "the", "text", "has"})
        pe.prompt.tokens.push_back(vocab.id_of(w));
      pe.prompt.tokens.push_back(vocab.id_of(kInstructionNouns[static_cast<size_t>(rule_word)]));
      for (const char* w : {"otherwise", "no", "."})
        pe.prompt.tokens.push_back(vocab.id_of(w));
      for (int e = 0; e < examples_per_prompt; ++e) {
        const bool positive = (e % 2) == 0;
        std::vector<int> others;
        while (static_cast<int>(others.size()) < words_per_input) {
          const int w = rng.uniform_int(static_cast<int>(kInstructionNouns.size()));
          if (w != rule_word) others.push_back(w);
        }
        if (positive)
          others[static_cast<size_t>(rng.uniform_int(words_per_input))] = rule_word;
        TaskExample ex;
        ex.input = {vocab.id_of("text"), vocab.id_of(":")};
        for (int w : others)
          ex.input.push_back(vocab.id_of(kInstructionNouns[static_cast<size_t>(w)]));
        ex.output = {vocab.id_of(positive ? "yes" : "no")};
        pe.examples.push_back(std::move(ex));
      }
      out.push_back(std::move(pe));
    }
  };
  gen_split(n_train_prompts, "train/instruction-", suite.train_prompts);
  gen_split(n_heldout_prompts, "heldout/instruction-", suite.heldout_prompts);
  suite.validate();
  return suite;
}

// ---- metrics ---------------------------------------------------------------------

namespace {

// Prompt-first concatenation; the input tail is dropped on overflow.
TokenSeq build_model_input(const TransformerLM& model, const TokenSeq* prompt,
                           const TokenSeq& input, int* truncations) {
  if (!prompt) return input;
  TokenSeq full = *prompt;
  full.insert(full.end(), input.begin(), input.end());
  const int max_seq = model.config().max_seq_len;
  if (static_cast<int>(full.size()) > max_seq) {
    full.resize(static_cast<size_t>(max_seq));
    if (truncations) ++*truncations;
  }
  return full;
}

}  // namespace

double eval_exact_match(const TransformerLM& model, const TokenSeq* prompt,
                        const std::vector<TaskExample>& examples,
                        const EvalOptions& options) {
  if (examples.empty()) throw ContractViolation("eval_exact_match: no examples");
  int hits = 0;
  Rng rng(0);  // greedy decoding draws nothing
  for (const TaskExample& ex : examples) {
    const TokenSeq source = build_model_input(model, prompt, ex.input, options.truncations);
    if (options.audit) options.audit->model_inputs.push_back(source);
    const TokenSeq got =
        model.generate(source, DecodeMode::kGreedy, options.max_generate_len, rng);
    if (got == ex.output) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

double eval_perplexity(const TransformerLM& model, const TokenSeq* prompt,
                       const std::vector<TaskExample>& examples,
                       const EvalOptions& options) {
  if (examples.empty()) throw ContractViolation("eval_perplexity: no examples");
  double total_nll = 0.0;
  int64_t total_tokens = 0;
  Tape tape(Tape::Mode::kNoGrad);
  for (const TaskExample& ex : examples) {
    const TokenSeq source = build_model_input(model, prompt, ex.input, options.truncations);
    if (options.audit) options.audit->model_inputs.push_back(source);
    TokenSeq target = ex.output;
    target.push_back(2 /* <eos> */);
    const double mean_nll = model.sequence_loss(tape, source, target).item();
    total_nll += mean_nll * static_cast<double>(target.size());
    total_tokens += static_cast<int64_t>(target.size());
  }
  return perplexity_of_loss(total_nll / static_cast<double>(total_tokens));
}

double eval_metric(const TransformerLM& model, const TokenSeq* prompt,
                   const std::vector<TaskExample>& examples, TaskMetric metric,
                   const EvalOptions& options) {
  return metric == TaskMetric::kExactMatch
             ? eval_exact_match(model, prompt, examples, options)
             : eval_perplexity(model, prompt, examples, options);
}

// ---- oracles ---------------------------------------------------------------------

std::optional<TokenSeq> persona_oracle_answer(const Vocabulary& vocab,
                                              const TokenSeq& prompt_tokens,
                                              const TokenSeq& question) {
  if (!is_well_formed_persona_question(vocab, question)) return std::nullopt;
  const int attr_token = question[3];
  // Facts are five tokens: my <attr> is <value> .
  for (size_t i = 0; i + 4 < prompt_tokens.size(); i += 5) {
    if (prompt_tokens[i + 1] == attr_token) return TokenSeq{prompt_tokens[i + 3]};
  }
  return std::nullopt;
}

bool is_well_formed_persona_question(const Vocabulary& vocab, const TokenSeq& tokens) {
  if (tokens.size() != 5) return false;
  if (tokens[0] != vocab.id_of("what") || tokens[1] != vocab.id_of("is") ||
      tokens[2] != vocab.id_of("your") || tokens[4] != vocab.id_of("?"))
    return false;
  const std::string& attr = vocab.token_of(tokens[3]);
  for (const char* w : kAttrWords)
    if (attr == w) return true;
  return false;
}

namespace {

struct ParsedSchema {
  // concept token -> id token, per role
  std::unordered_map<int, int> table_binding;
  // (table id token, column concept token) -> column id token
  std::unordered_map<int64_t, int> column_binding;
};

std::optional<ParsedSchema> parse_schema_prompt(const Vocabulary& vocab,
                                                const TokenSeq& prompt) {
  ParsedSchema out;
  const int dot = vocab.id_of(".");
  size_t i = 0;
  while (i < prompt.size()) {
    size_t end = i;
    while (end < prompt.size() && prompt[end] != dot) ++end;
    if (end == prompt.size()) return std::nullopt;
    const size_t len = end - i;
    if (len == 4 && prompt[i] == vocab.id_of("table") &&
        prompt[i + 2] == vocab.id_of("means")) {
      out.table_binding[prompt[i + 3]] = prompt[i + 1];
    } else if (len == 5 && prompt[i + 1] == vocab.id_of("has") &&
               prompt[i + 3] == vocab.id_of("meaning")) {
      const int64_t key = (static_cast<int64_t>(prompt[i]) << 32) | prompt[i + 4];
      out.column_binding[key] = prompt[i + 2];
    } else {
      return std::nullopt;
    }
    i = end + 1;
  }
  return out;
}

}  // namespace

bool is_well_formed_schema_question(const Vocabulary& vocab, const TokenSeq& tokens) {
  auto is_column_concept = [&](int tok) {
    const std::string& w = vocab.token_of(tok);
    for (const char* c : kColumnWords)
      if (w == c) return true;
    return false;
  };
  auto is_table_concept = [&](int tok) {
    const std::string& w = vocab.token_of(tok);
    for (const char* c : kTableWords)
      if (w == c) return true;
    return false;
  };
  if (tokens.size() != 6 && tokens.size() != 10) return false;
  if (tokens[0] != vocab.id_of("show") || tokens[1] != vocab.id_of("the") ||
      tokens[3] != vocab.id_of("of") || tokens.back() != vocab.id_of("?"))
    return false;
  if (!is_column_concept(tokens[2]) || !is_table_concept(tokens[4])) return false;
  if (tokens.size() == 10) {
    if (tokens[5] != vocab.id_of("whose") || tokens[7] != vocab.id_of("is"))
      return false;
    if (!is_column_concept(tokens[6])) return false;
  }
  return true;
}

std::optional<TokenSeq> schema_oracle_answer(const Vocabulary& vocab,
                                             const TokenSeq& prompt_tokens,
                                             const TokenSeq& question) {
  if (!is_well_formed_schema_question(vocab, question)) return std::nullopt;
  const auto schema = parse_schema_prompt(vocab, prompt_tokens);
  if (!schema) return std::nullopt;
  const int col_concept = question[2];
  const int table_concept = question[4];
  auto t = schema->table_binding.find(table_concept);
  if (t == schema->table_binding.end()) return std::nullopt;
  const int tab_id = t->second;
  auto lookup_col = [&](int concept_tok) -> std::optional<int> {
    const int64_t key = (static_cast<int64_t>(tab_id) << 32) | concept_tok;
    auto it = schema->column_binding.find(key);
    if (it == schema->column_binding.end()) return std::nullopt;
    return it->second;
  };
  const auto col = lookup_col(col_concept);
  if (!col) return std::nullopt;
  TokenSeq out{vocab.id_of("select"), *col, vocab.id_of("from"), tab_id};
  if (question.size() == 10) {
    const auto col2 = lookup_col(question[6]);
    if (!col2) return std::nullopt;
    out.push_back(vocab.id_of("where"));
    out.push_back(*col2);
    out.push_back(vocab.id_of("="));
    out.push_back(question[8]);
  }
  return out;
}

double prompt_dependence_rate(const TaskSuite& suite) {
  const Vocabulary vocab = vocabulary_for_task(suite.name);
  std::vector<const PromptExamples*> all;
  for (const auto& pe : suite.train_prompts) all.push_back(&pe);
  for (const auto& pe : suite.heldout_prompts) all.push_back(&pe);
  if (all.size() < 2) throw ContractViolation("prompt_dependence_rate: need >= 2 prompts");
  auto oracle = [&](const TokenSeq& prompt,
                    const TokenSeq& question) -> std::optional<TokenSeq> {
    if (suite.name == "persona") return persona_oracle_answer(vocab, prompt, question);
    if (suite.name == "schema") return schema_oracle_answer(vocab, prompt, question);
    throw ContractViolation("prompt_dependence_rate: no oracle for task " + suite.name);
  };
  int64_t changed = 0, total = 0;
  for (size_t i = 0; i < all.size(); ++i) {
    const PromptExamples& own = *all[i];
    const PromptExamples& other = *all[(i + 1) % all.size()];
    for (const TaskExample& ex : own.examples) {
      const auto before = oracle(own.prompt.tokens, ex.input);
      const auto after = oracle(other.prompt.tokens, ex.input);
      ++total;
      if (!before || !after || *before != *after) ++changed;
    }
  }
  return static_cast<double>(changed) / static_cast<double>(total);
}

PromptInputPairs prompt_input_pairs(const TaskSuite& suite) {
  PromptInputPairs pairs;
  for (const auto& pe : suite.train_prompts)
    for (const auto& ex : pe.examples) pairs.emplace_back(pe.prompt.tokens, ex.input);
  return pairs;
}

// ---- serialization ----------------------------------------------------------------

namespace {

std::string metric_name(TaskMetric m) {
  return m == TaskMetric::kExactMatch ? "EXACT_MATCH" : "PERPLEXITY";
}

std::string direction_name(MetricDirection d) {
  return d == MetricDirection::kHigherBetter ? "HIGHER_BETTER" : "LOWER_BETTER";
}

std::string join_tokens(const Vocabulary& vocab, const TokenSeq& tokens) {
  return vocab.detokenize(tokens);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == '\t') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

void save_suite(const TaskSuite& suite, const std::string& path) {
  suite.validate();
  const Vocabulary vocab = vocabulary_for_task(suite.name);
  std::ofstream os(path);
  if (!os) throw FileError("cannot open suite file for writing: " + path);
  os << "SUITE\t" << suite.name << '\t' << metric_name(suite.metric) << '\t'
     << direction_name(suite.direction) << '\n';
  auto write_split = [&](const std::vector<PromptExamples>& split) {
    for (const auto& pe : split) {
      os << "PROMPT\t" << pe.prompt.id << '\t' << join_tokens(vocab, pe.prompt.tokens)
         << '\n';
      for (const auto& ex : pe.examples)
        os << "EXAMPLE\t" << pe.prompt.id << '\t' << join_tokens(vocab, ex.input) << '\t'
           << join_tokens(vocab, ex.output) << '\n';
    }
  };
  write_split(suite.train_prompts);
  write_split(suite.heldout_prompts);
  if (!os) throw FileError("write failed: " + path);
}

TaskSuite load_suite(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FileError("cannot open suite file: " + path);
  std::string line;
  if (!std::getline(is, line)) throw FileError("empty suite file: " + path);
  auto header = split_fields(line);
  if (header.size() != 4 || header[0] != "SUITE")
    throw FileError("suite file missing SUITE header: " + path);
  TaskSuite suite;
  suite.name = header[1];
  if (header[2] == "EXACT_MATCH")
    suite.metric = TaskMetric::kExactMatch;
  else if (header[2] == "PERPLEXITY")
    suite.metric = TaskMetric::kPerplexity;
  else
    throw FileError("unknown metric in suite file: " + header[2]);
  if (header[3] == "HIGHER_BETTER")
    suite.direction = MetricDirection::kHigherBetter;
  else if (header[3] == "LOWER_BETTER")
    suite.direction = MetricDirection::kLowerBetter;
  else
    throw FileError("unknown direction in suite file: " + header[3]);

  const Vocabulary vocab = vocabulary_for_task(suite.name);
  // (split vector, index) handles stay valid across push_backs.
  std::unordered_map<std::string, std::pair<int, size_t>> by_id;
  auto split_of = [&](const std::string& id) -> std::vector<PromptExamples>& {
    if (id.rfind("train/", 0) == 0) return suite.train_prompts;
    if (id.rfind("heldout/", 0) == 0) return suite.heldout_prompts;
    throw FileError("prompt id must start with train/ or heldout/: " + id);
  };
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto fields = split_fields(line);
    if (fields[0] == "PROMPT") {
      if (fields.size() != 3) throw FileError("malformed PROMPT record: " + line);
      auto& split = split_of(fields[1]);
      split.push_back({});
      split.back().prompt.id = fields[1];
      split.back().prompt.tokens = vocab.tokenize(fields[2]);
      by_id[fields[1]] = {&split == &suite.train_prompts ? 0 : 1, split.size() - 1};
    } else if (fields[0] == "EXAMPLE") {
      if (fields.size() != 4) throw FileError("malformed EXAMPLE record: " + line);
      auto it = by_id.find(fields[1]);
      if (it == by_id.end())
        throw FileError("EXAMPLE before its PROMPT record: " + fields[1]);
      auto& split = it->second.first == 0 ? suite.train_prompts : suite.heldout_prompts;
      split[it->second.second].examples.push_back(
          {vocab.tokenize(fields[2]), vocab.tokenize(fields[3])});
    } else {
      throw FileError("unknown record type: " + fields[0]);
    }
  }
  suite.validate();
  return suite;
}

}  // namespace pfi
