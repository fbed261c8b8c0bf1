#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "praise/errors.hpp"
#include "praise/rng.hpp"
#include "praise/scoring.hpp"
#include "praise/text.hpp"

namespace praise {

struct Fact {
  int subject;
  int relation;
  int object;

  auto operator<=>(const Fact&) const = default;
};

namespace detail {

inline constexpr std::array<std::string_view, 8> kEntitySyllables = {
    "ba", "de", "ki", "mo", "su", "ra", "ne", "to"};
inline constexpr std::array<std::string_view, 8> kRelationSyllables = {
    "lor", "mek", "tav", "zun", "pia", "rud", "fen", "gos"};

template <std::size_t N>
std::string syllable_name(int index, int width,
                          const std::array<std::string_view, N>& syllables) {
  std::string out;
  for (int d = width - 1; d >= 0; --d) {
    int q = index;
    for (int k = 0; k < d; ++k) q /= static_cast<int>(N);
    out += syllables[static_cast<std::size_t>(q % static_cast<int>(N))];
  }
  return out;
}

inline int name_width(int count, int base) {
  int width = 1;
  long long capacity = base;
  while (capacity < count) {
    capacity *= base;
    ++width;
  }
  return width;
}

}  // namespace detail

// Distinct lowercase single-word name per entity index; entity names use two
// or more syllables so they never collide with relation or template words.
inline std::string entity_name(int index, int n_entities) {
  const int width = std::max(2, detail::name_width(n_entities, 8));
  return detail::syllable_name(index, width, detail::kEntitySyllables);
}

inline std::string relation_name(int index, int n_relations) {
  const int width = detail::name_width(n_relations, 8);
  return detail::syllable_name(index, width, detail::kRelationSyllables);
}

// A seeded world: distinct (subject, relation, object) triples over named
// entities. Fact order is part of the artifact (retrieval breaks ties by
// ascending fact index).
struct KnowledgeBase {
  std::uint64_t seed = 0;
  int n_entities = 0;
  int n_relations = 0;
  std::vector<Fact> facts;
  std::vector<std::string> entity_names;
  std::vector<std::string> relation_names;

  std::string fact_surface(int index) const {
    const Fact& f = facts[static_cast<std::size_t>(index)];
    std::string out = entity_names[static_cast<std::size_t>(f.subject)];
    out += ' ';
    out += relation_names[static_cast<std::size_t>(f.relation)];
    out += ' ';
    out += entity_names[static_cast<std::size_t>(f.object)];
    return out;
  }
};

// Seeded world construction. Early facts pair entities so that coverage
// ("every entity appears in some fact") holds whenever
// n_facts >= ceil(n_entities / 2); below that the world is still valid and
// coverage is best-effort.
inline KnowledgeBase generate_world(std::uint64_t seed, int n_entities, int n_relations,
                                    int n_facts) {
  if (n_entities < 1 || n_relations < 1 || n_facts < 1) {
    throw InfeasibleCountsError("world counts must be >= 1");
  }
  const long long capacity = static_cast<long long>(n_entities) * n_entities * n_relations;
  if (static_cast<long long>(n_facts) > capacity) {
    throw InfeasibleCountsError("more facts requested than distinct triples exist");
  }
  KnowledgeBase kb;
  kb.seed = seed;
  kb.n_entities = n_entities;
  kb.n_relations = n_relations;
  for (int e = 0; e < n_entities; ++e) kb.entity_names.push_back(entity_name(e, n_entities));
  for (int r = 0; r < n_relations; ++r) {
    kb.relation_names.push_back(relation_name(r, n_relations));
  }

  Rng rng(Rng::mix(seed, 0x776f726c64ULL));  // "world"
  std::set<Fact> seen;
  const auto add = [&](const Fact& f) {
    if (!seen.insert(f).second) return false;
    kb.facts.push_back(f);
    return true;
  };

  // Coverage pass: chain shuffled entities pairwise.
  std::vector<int> order(static_cast<std::size_t>(n_entities));
  for (int e = 0; e < n_entities; ++e) order[static_cast<std::size_t>(e)] = e;
  rng.shuffle(order);
  const int coverage_pairs = (n_entities + 1) / 2;
  for (int k = 0; k < coverage_pairs && static_cast<int>(kb.facts.size()) < n_facts; ++k) {
    const int s = order[static_cast<std::size_t>(2 * k)];
    const int o = order[static_cast<std::size_t>((2 * k + 1) % n_entities)];
    add(Fact{s, rng.below_int(n_relations), o});
  }

  // Random fill with rejection, then a deterministic sweep if unlucky.
  long long attempts = 0;
  const long long cap = 50LL * n_facts + 1000;
  while (static_cast<int>(kb.facts.size()) < n_facts && attempts < cap) {
    ++attempts;
    add(Fact{rng.below_int(n_entities), rng.below_int(n_relations),
             rng.below_int(n_entities)});
  }
  for (int s = 0; s < n_entities && static_cast<int>(kb.facts.size()) < n_facts; ++s) {
    for (int r = 0; r < n_relations && static_cast<int>(kb.facts.size()) < n_facts; ++r) {
      for (int o = 0; o < n_entities && static_cast<int>(kb.facts.size()) < n_facts; ++o) {
        add(Fact{s, r, o});
      }
    }
  }
  return kb;
}

// A multi-hop question: the query names the head entity and the relation
// sequence; hidden_chain is the supporting fact path (the test certificate,
// never shown to the policy).
struct TaskInstance {
  std::string query;
  std::string gold_answer;
  std::vector<Fact> hidden_chain;
  int hops = 0;
  int head = -1;
};

inline std::string verbalize_task_query(const KnowledgeBase& kb, int head,
                                        std::span<const int> relations) {
  std::string q = "from ";
  q += kb.entity_names[static_cast<std::size_t>(head)];
  q += " follow";
  for (std::size_t i = 0; i < relations.size(); ++i) {
    q += (i == 0) ? " " : " then ";
    q += kb.relation_names[static_cast<std::size_t>(relations[i])];
  }
  q += " ?";
  return q;
}

struct TaskQueryParts {
  std::string head;
  std::vector<std::string> relations;
};

// Inverse of verbalize_task_query over surfaces. Used by the scripted oracle,
// which plans from the question text alone.
inline TaskQueryParts parse_task_query(std::string_view query) {
  const std::vector<std::string> toks = split_text(query);
  if (toks.size() < 5 || toks[0] != "from" || toks[2] != "follow" ||
      toks.back() != "?") {
    throw ValidationError("query does not match the task template: " +
                          std::string(query));
  }
  TaskQueryParts parts;
  parts.head = toks[1];
  parts.relations.push_back(toks[3]);
  std::size_t i = 4;
  while (i + 1 < toks.size() && toks[i] == "then") {
    parts.relations.push_back(toks[i + 1]);
    i += 2;
  }
  if (i + 1 != toks.size()) {
    throw ValidationError("query does not match the task template: " +
                          std::string(query));
  }
  return parts;
}

// Samples a chain task: every step is functional (unique object for the
// step's (subject, relation)), all chain entities are distinct, and the final
// relation has at least two distinct objects across the world, so the answer
// cannot be guessed from the relation alone.
inline TaskInstance generate_task(const KnowledgeBase& kb, int hops, std::uint64_t seed) {
  if (hops < 1) throw ValidationError("hops must be >= 1");
  // (subject, relation) -> distinct objects seen.
  std::map<std::pair<int, int>, std::vector<int>> objects;
  for (const Fact& f : kb.facts) {
    auto& v = objects[{f.subject, f.relation}];
    if (std::find(v.begin(), v.end(), f.object) == v.end()) v.push_back(f.object);
  }
  std::vector<int> relation_fanout(static_cast<std::size_t>(kb.n_relations), 0);
  {
    std::vector<std::set<int>> per(static_cast<std::size_t>(kb.n_relations));
    for (const Fact& f : kb.facts) per[static_cast<std::size_t>(f.relation)].insert(f.object);
    for (int r = 0; r < kb.n_relations; ++r) {
      relation_fanout[static_cast<std::size_t>(r)] =
          static_cast<int>(per[static_cast<std::size_t>(r)].size());
    }
  }

  Rng rng(Rng::mix(seed, 0x7461736bULL));  // "task"
  for (int attempt = 0; attempt < 5000; ++attempt) {
    const int head = rng.below_int(kb.n_entities);
    std::unordered_set<int> visited{head};
    std::vector<Fact> chain;
    int cur = head;
    bool dead = false;
    for (int hop = 0; hop < hops; ++hop) {
      std::vector<Fact> candidates;
      for (int r = 0; r < kb.n_relations; ++r) {
        const auto it = objects.find({cur, r});
        if (it == objects.end() || it->second.size() != 1) continue;
        const int obj = it->second.front();
        if (visited.count(obj)) continue;
        if (hop == hops - 1 && relation_fanout[static_cast<std::size_t>(r)] < 2) continue;
        candidates.push_back(Fact{cur, r, obj});
      }
      if (candidates.empty()) {
        dead = true;
        break;
      }
      const Fact step = candidates[static_cast<std::size_t>(
          rng.below_int(static_cast<int>(candidates.size())))];
      chain.push_back(step);
      visited.insert(step.object);
      cur = step.object;
    }
    if (dead) continue;
    TaskInstance task;
    task.head = head;
    task.hops = hops;
    task.hidden_chain = chain;
    std::vector<int> rels;
    for (const Fact& f : chain) rels.push_back(f.relation);
    task.query = verbalize_task_query(kb, head, rels);
    task.gold_answer = kb.entity_names[static_cast<std::size_t>(chain.back().object)];
    return task;
  }
  throw NoChainAvailableError("no chain of requested hops under task constraints");
}

// Independent draws; repeats are possible when the world supports few
// distinct chains. Seeds are mix(seed, i), so any prefix of the sequence is
// stable under count changes.
inline std::vector<TaskInstance> generate_tasks(const KnowledgeBase& kb, int count,
                                                int hops, std::uint64_t seed) {
  if (count < 0) throw ValidationError("task count must be >= 0");
  std::vector<TaskInstance> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    out.push_back(generate_task(kb, hops, Rng::mix(seed, static_cast<std::uint64_t>(i))));
  }
  return out;
}

// Draws tasks with distinct queries, skipping any query in `exclude`.
// Deterministic: candidate seeds are mix(seed, i) for i = 0, 1, ...
inline std::vector<TaskInstance> generate_task_set(
    const KnowledgeBase& kb, int count, int hops, std::uint64_t seed,
    const std::unordered_set<std::string>& exclude = {}) {
  std::vector<TaskInstance> out;
  std::unordered_set<std::string> used;
  const long long cap = 200LL * count + 1000;
  for (long long i = 0; static_cast<int>(out.size()) < count; ++i) {
    if (i >= cap) {
      throw NoChainAvailableError("could not draw enough distinct tasks");
    }
    TaskInstance t = generate_task(kb, hops, Rng::mix(seed, static_cast<std::uint64_t>(i)));
    if (used.count(t.query) || exclude.count(t.query)) continue;
    used.insert(t.query);
    out.push_back(std::move(t));
  }
  return out;
}

// Retrieval result: matching fact surfaces joined with " ; ".
struct Observation {
  std::string text;
  std::vector<int> fact_indices;
};

// Token-overlap retrieval: score = multiset overlap between the normalized
// search query and the fact's three name tokens. Zero-overlap facts never
// appear; ties break by ascending fact index.
inline Observation retrieve(const KnowledgeBase& kb, std::string_view search_query,
                            int top_k) {
  if (top_k < 1) throw ValidationError("top_k must be >= 1");
  const std::vector<std::string> q = normalize(search_query).tokens;
  std::unordered_map<std::string, int> query_counts;
  for (const std::string& t : q) query_counts[t] += 1;

  std::vector<std::pair<int, int>> scored;  // (-score, index) for stable sort
  for (int i = 0; i < static_cast<int>(kb.facts.size()); ++i) {
    const Fact& f = kb.facts[static_cast<std::size_t>(i)];
    std::unordered_map<std::string, int> counts = query_counts;
    int overlap = 0;
    const std::array<const std::string*, 3> toks = {
        &kb.entity_names[static_cast<std::size_t>(f.subject)],
        &kb.relation_names[static_cast<std::size_t>(f.relation)],
        &kb.entity_names[static_cast<std::size_t>(f.object)]};
    for (const std::string* t : toks) {
      const auto it = counts.find(*t);
      if (it != counts.end() && it->second > 0) {
        it->second -= 1;
        overlap += 1;
      }
    }
    if (overlap > 0) scored.emplace_back(-overlap, i);
  }
  std::sort(scored.begin(), scored.end());
  if (static_cast<int>(scored.size()) > top_k) {
    scored.resize(static_cast<std::size_t>(top_k));
  }
  Observation obs;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    if (i > 0) obs.text += " ; ";
    obs.text += kb.fact_surface(scored[i].second);
    obs.fact_indices.push_back(scored[i].second);
  }
  return obs;
}

// World file: one header line with the seed and counts, then one fact per
// line as subject<TAB>relation<TAB>object over surface names.
inline void save_world(const KnowledgeBase& kb, std::ostream& os) {
  os << "praise-world v1 seed=" << kb.seed << " entities=" << kb.n_entities
     << " relations=" << kb.n_relations << " facts=" << kb.facts.size() << "\n";
  for (int i = 0; i < static_cast<int>(kb.facts.size()); ++i) {
    const Fact& f = kb.facts[static_cast<std::size_t>(i)];
    os << kb.entity_names[static_cast<std::size_t>(f.subject)] << '\t'
       << kb.relation_names[static_cast<std::size_t>(f.relation)] << '\t'
       << kb.entity_names[static_cast<std::size_t>(f.object)] << '\n';
  }
  if (!os) throw IoError("failed writing world file");
}

inline KnowledgeBase load_world(std::istream& is) {
  std::string header;
  if (!std::getline(is, header)) throw IoError("empty world file");
  std::uint64_t seed = 0;
  int n_entities = 0, n_relations = 0, n_facts = 0;
  {
    std::istringstream hs(header);
    std::string magic, version, kv;
    hs >> magic >> version;
    if (magic != "praise-world" || version != "v1") {
      throw IoError("not a praise-world v1 file");
    }
    bool saw_seed = false, saw_e = false, saw_r = false, saw_f = false;
    while (hs >> kv) {
      const std::size_t eq = kv.find('=');
      if (eq == std::string::npos) throw IoError("bad world header field: " + kv);
      const std::string key = kv.substr(0, eq);
      const std::string val = kv.substr(eq + 1);
      try {
        if (key == "seed") {
          seed = std::stoull(val);
          saw_seed = true;
        } else if (key == "entities") {
          n_entities = std::stoi(val);
          saw_e = true;
        } else if (key == "relations") {
          n_relations = std::stoi(val);
          saw_r = true;
        } else if (key == "facts") {
          n_facts = std::stoi(val);
          saw_f = true;
        } else {
          throw IoError("unknown world header key: " + key);
        }
      } catch (const std::invalid_argument&) {
        throw IoError("bad world header value: " + kv);
      } catch (const std::out_of_range&) {
        throw IoError("bad world header value: " + kv);
      }
    }
    if (!saw_seed || !saw_e || !saw_r || !saw_f) {
      throw IoError("world header missing seed/entities/relations/facts");
    }
  }
  if (n_entities < 1 || n_relations < 1 || n_facts < 0) {
    throw IoError("world header counts out of range");
  }
  KnowledgeBase kb;
  kb.seed = seed;
  kb.n_entities = n_entities;
  kb.n_relations = n_relations;
  std::unordered_map<std::string, int> ent, rel;
  for (int e = 0; e < n_entities; ++e) {
    kb.entity_names.push_back(entity_name(e, n_entities));
    ent[kb.entity_names.back()] = e;
  }
  for (int r = 0; r < n_relations; ++r) {
    kb.relation_names.push_back(relation_name(r, n_relations));
    rel[kb.relation_names.back()] = r;
  }
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::array<std::string, 3> parts;
    std::size_t start = 0;
    for (int k = 0; k < 2; ++k) {
      const std::size_t tab = line.find('\t', start);
      if (tab == std::string::npos) throw IoError("fact line needs two tabs: " + line);
      parts[static_cast<std::size_t>(k)] = line.substr(start, tab - start);
      start = tab + 1;
    }
    parts[2] = line.substr(start);
    const auto se = ent.find(parts[0]);
    const auto rr = rel.find(parts[1]);
    const auto oe = ent.find(parts[2]);
    if (se == ent.end() || oe == ent.end()) {
      throw IoError("unknown entity in fact line: " + line);
    }
    if (rr == rel.end()) throw IoError("unknown relation in fact line: " + line);
    kb.facts.push_back(Fact{se->second, rr->second, oe->second});
  }
  if (static_cast<int>(kb.facts.size()) != n_facts) {
    throw IoError("world fact count does not match header");
  }
  return kb;
}

}  // namespace praise
