/*
 * Copyright 2026 The mofcure Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mofcure/agents/backend.hpp"
#include "mofcure/cif.hpp"
#include "mofcure/crystal.hpp"
#include "mofcure/error.hpp"
#include "mofcure/refgraph.hpp"
#include "mofcure/structure.hpp"

namespace mofcure {

namespace fs = std::filesystem;
using nlohmann::json;

// ===================================================================
// Record store
// ===================================================================
//
// Layout:
//   <root>/csd/<REFCODE>.rec        metadata, "key = value" per line, '#' comments
//   <root>/csd/<REFCODE>.cif        optional structure
//   <root>/coremof/<REFCODE>.cif    curated-database CIFs (records optional)
//   <root>/mosaec/<REFCODE>.cif
//   <root>/doi_index.tsv            "<doi>\t<REFCODE>" per line
//
// Record keys: refcode, doi, chemical_name, formula, synonyms (';'-separated),
// crystal_system, space_group, cell ("a b c alpha beta gamma"), volume,
// has_disorder (yes/no), disorder_details, remarks, structural_formula.
// Unknown keys are kept in `extra`.

struct MofRecord {
  std::string source;
  std::string refcode;
  std::string doi;
  std::string chemical_name;
  std::string formula;
  std::vector<std::string> synonyms;
  std::string crystal_system;
  std::string space_group;
  std::optional<Lattice> cell;
  std::optional<double> volume;
  bool has_disorder = false;
  std::string disorder_details;
  std::string remarks;
  std::string structural_formula;
  std::string cif_path;  ///< empty when the store has no CIF for this refcode
  std::map<std::string, std::string> extra;
};

namespace sources_detail {

inline std::string trim(std::string_view s) { return formula_detail::trim(s); }

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline std::optional<double> to_double(const std::string& s) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (trim(s.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (auto t = trim(cur); !t.empty()) out.push_back(t);
  return out;
}

inline std::optional<Lattice> parse_cell(const std::string& text, const std::string& where) {
  std::istringstream in(text);
  std::vector<double> v;
  double x;
  while (in >> x) v.push_back(x);
  if (v.size() != 6) fail(Errc::ValidationError, where + ": cell needs 6 numbers");
  Lattice l{v[0], v[1], v[2], v[3], v[4], v[5]};
  if (!l.valid()) fail(Errc::ValidationError, where + ": cell parameters out of range");
  return l;
}

}  // namespace sources_detail

inline MofRecord parse_record(std::istream& in, const std::string& where = "record") {
  using namespace sources_detail;
  MofRecord r;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) fail(Errc::ValidationError, where + ":" + std::to_string(lineno) + ": expected key = value");
    std::string key = lower(trim(t.substr(0, eq))), val = trim(t.substr(eq + 1));
    if (key == "refcode") r.refcode = upper(val);
    else if (key == "doi") r.doi = val;
    else if (key == "chemical_name") r.chemical_name = val;
    else if (key == "formula") r.formula = val;
    else if (key == "synonyms") r.synonyms = split(val, ';');
    else if (key == "crystal_system") r.crystal_system = val;
    else if (key == "space_group") r.space_group = val;
    else if (key == "cell") r.cell = val.empty() ? std::nullopt : parse_cell(val, where);
    else if (key == "volume") {
      if (!val.empty()) {
        r.volume = to_double(val);
        if (!r.volume) fail(Errc::ValidationError, where + ": volume is not a number");
      }
    } else if (key == "has_disorder") {
      auto v = lower(val);
      if (v != "yes" && v != "no" && v != "true" && v != "false")
        fail(Errc::ValidationError, where + ": has_disorder must be yes or no");
      r.has_disorder = v == "yes" || v == "true";
    } else if (key == "disorder_details") r.disorder_details = val;
    else if (key == "remarks") r.remarks = val;
    else if (key == "structural_formula") r.structural_formula = val;
    else r.extra[key] = val;
  }
  if (r.refcode.empty()) fail(Errc::ValidationError, where + ": missing refcode");
  return r;
}

inline std::string write_record(const MofRecord& r) {
  std::ostringstream o;
  auto kv = [&](const char* k, const std::string& v) { o << k << " = " << v << '\n'; };
  kv("refcode", r.refcode);
  kv("doi", r.doi);
  kv("chemical_name", r.chemical_name);
  kv("formula", r.formula);
  std::string syn;
  for (std::size_t i = 0; i < r.synonyms.size(); ++i) syn += (i ? "; " : "") + r.synonyms[i];
  kv("synonyms", syn);
  kv("crystal_system", r.crystal_system);
  kv("space_group", r.space_group);
  if (r.cell) {
    const auto& l = *r.cell;
    o << "cell = " << cif_detail::fmt_double(l.a) << ' ' << cif_detail::fmt_double(l.b) << ' '
      << cif_detail::fmt_double(l.c) << ' ' << cif_detail::fmt_double(l.alpha) << ' '
      << cif_detail::fmt_double(l.beta) << ' ' << cif_detail::fmt_double(l.gamma) << '\n';
  }
  if (r.volume) kv("volume", cif_detail::fmt_double(*r.volume));
  kv("has_disorder", r.has_disorder ? "yes" : "no");
  if (!r.disorder_details.empty()) kv("disorder_details", r.disorder_details);
  if (!r.remarks.empty()) kv("remarks", r.remarks);
  if (!r.structural_formula.empty()) kv("structural_formula", r.structural_formula);
  for (const auto& [k, v] : r.extra) kv(k.c_str(), v);
  return o.str();
}

/// File-backed store, read once at open and immutable afterwards, so lookups
/// from several threads need no locking.
class RecordStore {
 public:
  static RecordStore open(const fs::path& root) {
    if (!fs::is_directory(root)) fail(Errc::NotFound, "store directory " + root.string() + " does not exist");
    RecordStore st;
    st.root_ = root;
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& dir : dirs) {
      std::string source = dir.filename().string();
      auto& src = st.sources_[source];
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        std::string stem = sources_detail::upper(f.stem().string());
        if (f.extension() == ".cif") src.cifs[stem] = f.string();
        else if (f.extension() == ".rec") {
          std::ifstream in(f);
          auto rec = parse_record(in, f.string());
          if (rec.refcode != stem) fail(Errc::ValidationError, f.string() + ": refcode does not match file name");
          rec.source = source;
          src.records.emplace(rec.refcode, std::move(rec));
        }
      }
      for (auto& [code, rec] : src.records)
        if (auto it = src.cifs.find(code); it != src.cifs.end()) rec.cif_path = it->second;
    }
    fs::path index = root / "doi_index.tsv";
    if (fs::exists(index)) {
      std::ifstream in(index);
      std::string line;
      while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) fail(Errc::ValidationError, "doi_index.tsv: expected a tab in '" + line + "'");
        st.doi_index_[sources_detail::lower(sources_detail::trim(line.substr(0, tab)))].insert(
            sources_detail::upper(sources_detail::trim(line.substr(tab + 1))));
      }
    } else {
      for (const auto& [name, src] : st.sources_)
        for (const auto& [code, rec] : src.records)
          if (!rec.doi.empty()) st.doi_index_[sources_detail::lower(rec.doi)].insert(code);
    }
    return st;
  }

  const fs::path& root() const { return root_; }

  std::vector<std::string> source_names() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : sources_) out.push_back(k);
    return out;
  }

  /// Throws NotFound when the refcode has no record in `source`.
  const MofRecord& lookup_refcode(const std::string& refcode, const std::string& source = "csd") const {
    auto s = sources_.find(source);
    if (s != sources_.end())
      if (auto it = s->second.records.find(sources_detail::upper(refcode)); it != s->second.records.end())
        return it->second;
    fail(Errc::NotFound, "refcode " + refcode + " not in " + source);
  }

  bool has_record(const std::string& refcode, const std::string& source = "csd") const {
    auto s = sources_.find(source);
    return s != sources_.end() && s->second.records.count(sources_detail::upper(refcode));
  }

  /// Sorted refcodes reported under `doi`; empty when the DOI is unknown.
  std::vector<std::string> lookup_doi(const std::string& doi) const {
    auto it = doi_index_.find(sources_detail::lower(sources_detail::trim(doi)));
    if (it == doi_index_.end()) return {};
    return {it->second.begin(), it->second.end()};
  }

  bool has_cif(const std::string& source, const std::string& refcode) const {
    auto s = sources_.find(source);
    return s != sources_.end() && s->second.cifs.count(sources_detail::upper(refcode));
  }

  std::optional<std::string> cif_path(const std::string& source, const std::string& refcode) const {
    auto s = sources_.find(source);
    if (s == sources_.end()) return std::nullopt;
    auto it = s->second.cifs.find(sources_detail::upper(refcode));
    if (it == s->second.cifs.end()) return std::nullopt;
    return it->second;
  }

  /// Every refcode with a record or a CIF in `source`, sorted.
  std::vector<std::string> refcodes(const std::string& source = "csd") const {
    std::set<std::string> out;
    if (auto s = sources_.find(source); s != sources_.end()) {
      for (const auto& [k, v] : s->second.records) out.insert(k);
      for (const auto& [k, v] : s->second.cifs) out.insert(k);
    }
    return {out.begin(), out.end()};
  }

 private:
  struct Source {
    std::map<std::string, MofRecord> records;
    std::map<std::string, std::string> cifs;
  };
  fs::path root_;
  std::map<std::string, Source> sources_;
  std::map<std::string, std::set<std::string>> doi_index_;
};

inline const MofRecord& lookup_refcode(const RecordStore& store, const std::string& refcode) {
  return store.lookup_refcode(refcode);
}
inline std::vector<std::string> lookup_doi(const RecordStore& store, const std::string& doi) { return store.lookup_doi(doi); }
inline bool has_cif(const RecordStore& store, const std::string& source, const std::string& refcode) {
  return store.has_cif(source, refcode);
}

// ===================================================================
// Paper corpus
// ===================================================================

/// File stem for a DOI: every character outside [A-Za-z0-9._-] becomes '_'.
inline std::string doi_to_filename(std::string_view doi) {
  std::string out;
  for (char c : formula_detail::trim(doi)) {
    bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out;
}

namespace markup_detail {

inline std::string decode_entity(std::string_view ent) {
  static const std::map<std::string, std::string, std::less<>> named{
      {"amp", "&"}, {"lt", "<"}, {"gt", ">"}, {"quot", "\""}, {"apos", "'"}, {"nbsp", " "},
      {"deg", "\xC2\xB0"}, {"Aring", "\xC3\x85"}, {"alpha", "\xCE\xB1"}, {"beta", "\xCE\xB2"},
      {"gamma", "\xCE\xB3"}, {"middot", "\xC2\xB7"}, {"times", "\xC3\x97"}, {"ndash", "-"}, {"mdash", "-"}};
  if (!ent.empty() && ent[0] == '#') {
    unsigned long cp = 0;
    try {
      cp = (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X')) ? std::stoul(std::string(ent.substr(2)), nullptr, 16)
                                                              : std::stoul(std::string(ent.substr(1)));
    } catch (const std::exception&) {
      return "&" + std::string(ent) + ";";
    }
    std::string out;
    if (cp < 0x80) out.push_back(static_cast<char>(cp));
    else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
    return out;
  }
  if (auto it = named.find(ent); it != named.end()) return it->second;
  return "&" + std::string(ent) + ";";
}

enum class Dialect { xml, html };

inline int header_level(const std::string& tag, Dialect d) {
  if (d == Dialect::html) {
    if (tag.size() == 2 && tag[0] == 'h' && tag[1] >= '1' && tag[1] <= '6') return tag[1] - '0';
    return 0;
  }
  if (tag == "article-title") return 1;
  if (tag == "title") return 2;
  return 0;
}

inline bool block_tag(const std::string& tag) {
  static const std::set<std::string> blocks{"p", "div", "br", "li", "tr", "sec", "abstract", "section", "article",
                                            "body", "table", "table-wrap", "caption", "ul", "ol", "td", "th",
                                            "fig", "label", "front", "back", "ref-list", "ref", "head"};
  return blocks.count(tag) > 0;
}

/// Reduces XML/HTML markup to text. Headers become "#"-prefixed lines, block
/// elements end paragraphs, script/style bodies are dropped.
inline std::string strip_markup(std::string_view in, Dialect d) {
  std::vector<std::string> blocks;
  std::string cur;
  auto flush = [&] {
    std::string collapsed;
    bool space = false;
    for (char c : cur) {
      if (std::isspace(static_cast<unsigned char>(c))) space = true;
      else {
        if (space && !collapsed.empty()) collapsed.push_back(' ');
        space = false;
        collapsed.push_back(c);
      }
    }
    if (!collapsed.empty() && collapsed.find_first_not_of("# ") != std::string::npos) blocks.push_back(collapsed);
    cur.clear();
  };
  std::size_t i = 0;
  while (i < in.size()) {
    char c = in[i];
    if (c == '<') {
      if (in.compare(i, 4, "<!--") == 0) {
        auto e = in.find("-->", i + 4);
        i = e == std::string_view::npos ? in.size() : e + 3;
        continue;
      }
      if (in.compare(i, 9, "<![CDATA[") == 0) {
        auto e = in.find("]]>", i + 9);
        auto stop = e == std::string_view::npos ? in.size() : e;
        cur.append(in.substr(i + 9, stop - i - 9));
        i = e == std::string_view::npos ? in.size() : e + 3;
        continue;
      }
      auto e = in.find('>', i);
      if (e == std::string_view::npos) break;
      std::string_view body = in.substr(i + 1, e - i - 1);
      i = e + 1;
      if (body.empty() || body[0] == '!' || body[0] == '?') continue;
      bool closing = body[0] == '/';
      if (closing) body.remove_prefix(1);
      std::string tag;
      for (char ch : body) {
        if (std::isspace(static_cast<unsigned char>(ch)) || ch == '/' || ch == '>') break;
        tag.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
      }
      if (!closing && (tag == "script" || tag == "style")) {
        auto close = sources_detail::lower(std::string(in.substr(i))).find("</" + tag);
        if (close == std::string::npos) break;
        i += close;
        continue;
      }
      if (int lvl = header_level(tag, d)) {
        flush();
        if (!closing) cur = std::string(static_cast<std::size_t>(lvl), '#') + " ";
      } else if (block_tag(tag)) {
        flush();
      }
      continue;
    }
    if (c == '&') {
      auto e = in.find(';', i);
      if (e != std::string_view::npos && e - i <= 10) {
        cur += decode_entity(in.substr(i + 1, e - i - 1));
        i = e + 1;
        continue;
      }
    }
    cur.push_back(c);
    ++i;
  }
  flush();
  std::string out;
  for (std::size_t k = 0; k < blocks.size(); ++k) out += (k ? "\n\n" : "") + blocks[k];
  if (!out.empty()) out.push_back('\n');
  return out;
}

}  // namespace markup_detail

inline std::string clean_xml(std::string_view text) { return markup_detail::strip_markup(text, markup_detail::Dialect::xml); }
inline std::string clean_html(std::string_view text) { return markup_detail::strip_markup(text, markup_detail::Dialect::html); }

struct PaperDocument {
  std::string path;
  std::string format;  ///< "xml", "html", "md", "txt"
  std::string text;
};

/// Looks for <corpus>/<doi_to_filename(doi)>.{xml,html,htm,md,txt,pdf}.
/// PDF needs OCR and is rejected.
inline PaperDocument find_and_parse_paper(const std::string& doi, const fs::path& corpus) {
  if (!fs::is_directory(corpus)) fail(Errc::PaperNotFound, "paper corpus " + corpus.string() + " does not exist");
  std::string stem = doi_to_filename(doi);
  for (const char* ext : {".xml", ".html", ".htm", ".md", ".txt", ".pdf"}) {
    fs::path p = corpus / (stem + ext);
    if (!fs::is_regular_file(p)) continue;
    std::string e = ext + 1;
    if (e == "pdf") fail(Errc::PdfNeedsOcr, p.filename().string() + " is a PDF; text extraction needs OCR");
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    PaperDocument doc{p.string(), e == "htm" ? "html" : e, {}};
    if (doc.format == "xml") doc.text = clean_xml(buf.str());
    else if (doc.format == "html") doc.text = clean_html(buf.str());
    else doc.text = buf.str();
    return doc;
  }
  for (const auto& entry : fs::directory_iterator(corpus))
    if (entry.path().stem() == stem)
      fail(Errc::UnsupportedFormat, entry.path().filename().string() + ": unsupported paper format");
  fail(Errc::PaperNotFound, "no paper for DOI " + doi);
}

// ===================================================================
// Extracted paper information
// ===================================================================

struct MofEntry {
  std::string identifier_in_text;
  std::string structural_formula;
  std::string chemical_formula;
  std::string crystal_system;
  std::string space_group;
  std::optional<Lattice> cell;
  std::optional<double> volume;
  std::string metal_node;
  std::string metal_oxidation_state;
  std::string organic_linker;
  std::string solvent;
  std::string important_notes;
};

struct PaperInfo {
  std::vector<MofEntry> mofs;
  Abbreviations abbreviations;

  const MofEntry* find(const std::string& id) const {
    for (const auto& m : mofs)
      if (m.identifier_in_text == id) return &m;
    return nullptr;
  }
};

namespace paper_detail {

inline std::string str_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return {};
  if (!j[key].is_string()) fail(Errc::ValidationError, std::string(key) + " must be a string");
  return j[key].get<std::string>();
}

inline std::optional<double> num_field(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  if (!j[key].is_number()) fail(Errc::ValidationError, std::string(key) + " must be a number");
  return j[key].get<double>();
}

}  // namespace paper_detail

/// JSON schema sent to the backend for extraction.
inline const json& paper_info_schema() {
  static const json schema = json::parse(R"({
    "type": "object",
    "required": ["mofs", "abbreviations"],
    "properties": {
      "mofs": {"type": "array", "items": {
        "type": "object",
        "required": ["identifier_in_text", "structural_formula"],
        "properties": {
          "identifier_in_text": {"type": "string"},
          "structural_formula": {"type": "string"},
          "chemical_formula": {"type": "string"},
          "crystal_system": {"type": "string"},
          "space_group": {"type": "string"},
          "cell_parameters": {"type": ["array", "null"], "items": {"type": "number"}, "minItems": 6, "maxItems": 6},
          "volume": {"type": ["number", "null"]},
          "metal_node": {"type": "string"},
          "metal_oxidation_state": {"type": "string"},
          "organic_linker": {"type": "string"},
          "solvent": {"type": "string"},
          "important_notes": {"type": "string"}}}},
      "abbreviations": {"type": "object", "additionalProperties": {"type": "string"}}}})");
  return schema;
}

inline json paper_info_json(const PaperInfo& info) {
  json mofs = json::array();
  for (const auto& m : info.mofs) {
    json cell = nullptr;
    if (m.cell) cell = {m.cell->a, m.cell->b, m.cell->c, m.cell->alpha, m.cell->beta, m.cell->gamma};
    mofs.push_back({{"identifier_in_text", m.identifier_in_text},
                    {"structural_formula", m.structural_formula},
                    {"chemical_formula", m.chemical_formula},
                    {"crystal_system", m.crystal_system},
                    {"space_group", m.space_group},
                    {"cell_parameters", cell},
                    {"volume", m.volume ? json(*m.volume) : json(nullptr)},
                    {"metal_node", m.metal_node},
                    {"metal_oxidation_state", m.metal_oxidation_state},
                    {"organic_linker", m.organic_linker},
                    {"solvent", m.solvent},
                    {"important_notes", m.important_notes}});
  }
  return {{"mofs", mofs}, {"abbreviations", info.abbreviations}};
}

/// Checks identifiers, abbreviation keys, and that every component name
/// in a structural formula either resolves on its own or is defined as an
/// abbreviation (directly or as its acid form H<n>name).
inline void validate_paper_info(const PaperInfo& info) {
  std::set<std::string> ids;
  for (const auto& m : info.mofs) {
    if (m.identifier_in_text.empty()) fail(Errc::ValidationError, "MOF entry without identifier_in_text");
    if (!ids.insert(m.identifier_in_text).second)
      fail(Errc::ValidationError, "duplicate identifier " + m.identifier_in_text);
  }
  for (const auto& [k, v] : info.abbreviations)
    if (formula_detail::trim(k).empty()) fail(Errc::ValidationError, "empty abbreviation key");
  auto defined = [&](const std::string& name) {
    if (info.abbreviations.count(name)) return true;
    for (int n = 1; n <= 6; ++n)
      if (info.abbreviations.count("H" + (n > 1 ? std::to_string(n) : std::string()) + name)) return true;
    return false;
  };
  for (const auto& m : info.mofs) {
    if (m.structural_formula.empty()) continue;
    std::vector<ComponentSpec> specs;
    try {
      specs = parse_structural_formula(m.structural_formula);
    } catch (const Error& e) {
      fail(Errc::ValidationError, m.identifier_in_text + ": " + e.what());
    }
    for (const auto& s : specs) {
      if (defined(s.name)) continue;
      try {
        resolve_name(s.name);
      } catch (const Error&) {
        fail(Errc::ValidationError, m.identifier_in_text + ": '" + s.name + "' is neither a known name nor an abbreviation");
      }
    }
  }
}

inline PaperInfo paper_info_from_json(const json& j) {
  using namespace paper_detail;
  if (!j.is_object() || !j.contains("mofs") || !j["mofs"].is_array())
    fail(Errc::ValidationError, "expected an object with a 'mofs' array");
  if (!j.contains("abbreviations") || !j["abbreviations"].is_object())
    fail(Errc::ValidationError, "expected an 'abbreviations' object");
  PaperInfo info;
  for (const auto& m : j["mofs"]) {
    if (!m.is_object()) fail(Errc::ValidationError, "MOF entry must be an object");
    MofEntry e;
    e.identifier_in_text = str_field(m, "identifier_in_text");
    e.structural_formula = str_field(m, "structural_formula");
    e.chemical_formula = str_field(m, "chemical_formula");
    e.crystal_system = str_field(m, "crystal_system");
    e.space_group = str_field(m, "space_group");
    if (m.contains("cell_parameters") && !m["cell_parameters"].is_null()) {
      const auto& c = m["cell_parameters"];
      if (!c.is_array() || c.size() != 6) fail(Errc::ValidationError, e.identifier_in_text + ": cell_parameters needs 6 numbers");
      std::array<double, 6> v{};
      for (std::size_t k = 0; k < 6; ++k) {
        if (!c[k].is_number()) fail(Errc::ValidationError, e.identifier_in_text + ": cell_parameters needs 6 numbers");
        v[k] = c[k].get<double>();
      }
      Lattice l{v[0], v[1], v[2], v[3], v[4], v[5]};
      if (!l.valid()) fail(Errc::ValidationError, e.identifier_in_text + ": cell parameters out of range");
      e.cell = l;
    }
    e.volume = num_field(m, "volume");
    e.metal_node = str_field(m, "metal_node");
    e.metal_oxidation_state = str_field(m, "metal_oxidation_state");
    e.organic_linker = str_field(m, "organic_linker");
    e.solvent = str_field(m, "solvent");
    e.important_notes = str_field(m, "important_notes");
    info.mofs.push_back(std::move(e));
  }
  for (const auto& [k, v] : j["abbreviations"].items()) {
    if (!v.is_string()) fail(Errc::ValidationError, "abbreviation " + k + " must map to a string");
    info.abbreviations[k] = v.get<std::string>();
  }
  validate_paper_info(info);
  return info;
}

struct ExtractOptions {
  std::string agent = "Paper Reader";
  std::string signature;
  int max_retries = 3;
};

inline const char* kExtractionPrompt =
    "Read the paper and list every synthesized MOF. Return JSON matching the schema: one entry per MOF "
    "with the label used in the text, the structural formula written with component names, the chemical "
    "formula, crystal system, space group, cell parameters [a,b,c,alpha,beta,gamma], volume, metal node, "
    "metal oxidation state, organic linker, solvent and important notes. Define every abbreviation used in "
    "a formula in 'abbreviations' (short form to full chemical name).";

/// Schema-constrained extraction through `backend`. Rejected responses are
/// retried up to `max_retries` times; `retries` receives the number of retries used.
inline PaperInfo extract_paper_info(const std::string& text, agents::ChatBackend& backend, const ExtractOptions& opt = {},
                                    int* retries = nullptr) {
  if (formula_detail::trim(text).empty()) fail(Errc::ValidationError, "paper text is empty");
  agents::ChatRequest req{opt.agent, "extract_paper", opt.signature,
                          {{"system", kExtractionPrompt}, {"user", text}}, paper_info_schema()};
  int attempts = 0;
  auto info = agents::structured_call(
      backend, req, [](const json& j) { return paper_info_from_json(j); }, opt.max_retries,
      Errc::ExtractionSchemaFailure, &attempts);
  if (retries) *retries = attempts - 1;
  return info;
}

// ===================================================================
// Refcode matching
// ===================================================================

using Composition = std::map<Element, double>;

/// Chemical formula in Hill-like notation. Accepts "C66 H46 Dy2 N1 O9 S6",
/// "C66H46Dy2NO9S6", and comma-separated moieties with a leading
/// multiplier ("2(H2 O1)", "n(...)").
inline Composition parse_chemical_formula(std::string_view text) {
  Composition out;
  for (auto part : sources_detail::split(std::string(text), ',')) {
    double mult = 1;
    std::string body = part;
    static const std::regex moiety(R"(^\s*([0-9.]+|n)?\s*\((.*)\)\s*$)");
    std::smatch m;
    if (std::regex_match(part, m, moiety)) {
      if (m[1].matched && m[1].str() != "n") mult = std::stod(m[1].str());
      body = m[2].str();
    }
    std::size_t i = 0;
    while (i < body.size()) {
      char c = body[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (!std::isupper(static_cast<unsigned char>(c))) fail(Errc::UnparseableFormula, "bad chemical formula '" + std::string(text) + "'");
      std::string sym(1, c);
      ++i;
      if (i < body.size() && std::islower(static_cast<unsigned char>(body[i]))) sym.push_back(body[i++]);
      auto e = Element::from_symbol(sym);
      if (!e) fail(Errc::UnparseableFormula, "unknown element " + sym + " in '" + std::string(text) + "'");
      std::size_t start = i;
      while (i < body.size() && (std::isdigit(static_cast<unsigned char>(body[i])) || body[i] == '.')) ++i;
      double n = start == i ? 1.0 : std::stod(body.substr(start, i - start));
      out[*e] += n * mult;
    }
  }
  return out;
}

struct MatchWeights {
  double formula = 0.4, cell = 0.3, space_group = 0.1, metal = 0.1, volume = 0.1;
  double threshold = 0.5;
  double length_tol = 0.01;  ///< relative
  double angle_tol = 0.5;    ///< degrees
  double volume_tol = 0.02;  ///< relative
};

/// Feature similarities, each in [0,1]; score = sum of weight * feature.
struct MatchEvidence {
  double formula = 0, cell = 0, space_group = 0, metal = 0, volume = 0;
};

struct MatchScore {
  std::string refcode;
  std::string mof_id;
  double score = 0;
  MatchEvidence evidence;
};

namespace match_detail {

inline std::optional<Composition> record_composition(const MofRecord& r) {
  if (r.formula.empty()) return std::nullopt;
  try {
    return parse_chemical_formula(r.formula);
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline std::optional<Composition> entry_composition(const MofEntry& m, const Abbreviations& abbr) {
  try {
    if (!m.chemical_formula.empty()) return parse_chemical_formula(m.chemical_formula);
  } catch (const Error&) {
  }
  if (m.structural_formula.empty()) return std::nullopt;
  try {
    ResolveContext ctx;
    ctx.abbreviations = &abbr;
    Composition out;
    for (const auto& [e, q] : reference_from_formula(m.structural_formula, ctx).species_counts()) out[e] = q.to_double();
    return out;
  } catch (const Error&) {
    return std::nullopt;
  }
}

inline double composition_similarity(const Composition& a, const Composition& b) {
  double ta = 0, tb = 0;
  for (const auto& [e, n] : a) ta += n;
  for (const auto& [e, n] : b) tb += n;
  if (ta <= 0 || tb <= 0) return 0;
  std::set<Element> keys;
  for (const auto& [e, n] : a) keys.insert(e);
  for (const auto& [e, n] : b) keys.insert(e);
  double tv = 0;
  for (Element e : keys) {
    double pa = a.count(e) ? a.at(e) / ta : 0, pb = b.count(e) ? b.at(e) / tb : 0;
    tv += std::abs(pa - pb);
  }
  return std::clamp(1.0 - 0.5 * tv, 0.0, 1.0);
}

inline std::set<Element> metals(const Composition& c) {
  std::set<Element> out;
  for (const auto& [e, n] : c)
    if (e.is_metal() && n > 0) out.insert(e);
  return out;
}

inline std::set<Element> metals_in_text(const std::string& s) {
  std::set<Element> out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isupper(static_cast<unsigned char>(s[i]))) continue;
    std::string sym(1, s[i]);
    if (i + 1 < s.size() && std::islower(static_cast<unsigned char>(s[i + 1]))) sym.push_back(s[i + 1]);
    if (auto e = Element::from_symbol(sym); e && e->is_metal()) out.insert(*e);
  }
  return out;
}

inline std::string normalize_sg(std::string s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c)) && c != '_') out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return out;
}

/// Minimises total cost over a square matrix; returns column per row.
inline std::vector<int> hungarian(const std::vector<std::vector<double>>& cost) {
  const int n = static_cast<int>(cost.size());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0), v(n + 1, 0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = 0;
      double delta = inf;
      for (int j = 1; j <= n; ++j)
        if (!used[j]) {
          double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
          if (cur < minv[j]) {
            minv[j] = cur;
            way[j] = j0;
          }
          if (minv[j] < delta) {
            delta = minv[j];
            j1 = j;
          }
        }
      for (int j = 0; j <= n; ++j)
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> col(n, -1);
  for (int j = 1; j <= n; ++j)
    if (p[j]) col[p[j] - 1] = j - 1;
  return col;
}

}  // namespace match_detail

inline MatchScore score_pair(const MofRecord& r, const MofEntry& m, const Abbreviations& abbr = {},
                             const MatchWeights& w = {}) {
  using namespace match_detail;
  MatchScore s;
  s.refcode = r.refcode;
  s.mof_id = m.identifier_in_text;
  auto ca = record_composition(r);
  auto cb = entry_composition(m, abbr);
  if (ca && cb) s.evidence.formula = composition_similarity(*ca, *cb);
  if (r.cell && m.cell) {
    const Lattice &x = *r.cell, &y = *m.cell;
    int ok = 0;
    for (auto [p, q] : {std::pair{x.a, y.a}, {x.b, y.b}, {x.c, y.c}})
      ok += std::abs(p - q) <= w.length_tol * std::max(p, q);
    for (auto [p, q] : {std::pair{x.alpha, y.alpha}, {x.beta, y.beta}, {x.gamma, y.gamma}}) ok += std::abs(p - q) <= w.angle_tol;
    s.evidence.cell = ok / 6.0;
  }
  if (!r.space_group.empty() && !m.space_group.empty())
    s.evidence.space_group = normalize_sg(r.space_group) == normalize_sg(m.space_group) ? 1.0 : 0.0;
  std::set<Element> ma = ca ? metals(*ca) : std::set<Element>{};
  std::set<Element> mb = cb ? metals(*cb) : metals_in_text(m.metal_node);
  if (!ma.empty() || !mb.empty()) {
    std::size_t inter = 0;
    for (Element e : ma) inter += mb.count(e);
    s.evidence.metal = double(inter) / double(ma.size() + mb.size() - inter);
  }
  std::optional<double> va = r.volume, vb = m.volume;
  if (!va && r.cell) va = r.cell->volume();
  if (!vb && m.cell) vb = m.cell->volume();
  if (va && vb && *va > 0 && *vb > 0) s.evidence.volume = std::abs(*va - *vb) <= w.volume_tol * std::max(*va, *vb) ? 1.0 : 0.0;
  s.score = w.formula * s.evidence.formula + w.cell * s.evidence.cell + w.space_group * s.evidence.space_group +
            w.metal * s.evidence.metal + w.volume * s.evidence.volume;
  return s;
}

/// Optimal one-to-one assignment maximising the summed score; pairs below
/// the threshold stay unmatched. Inputs are sorted by refcode and identifier
/// first, so the result does not depend on their order. Output is sorted by refcode.
inline std::vector<MatchScore> match_refcodes(std::vector<MofRecord> records, const PaperInfo& info,
                                              const MatchWeights& w = {}) {
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.refcode < b.refcode; });
  std::vector<const MofEntry*> mofs;
  for (const auto& m : info.mofs) mofs.push_back(&m);
  std::sort(mofs.begin(), mofs.end(), [](auto a, auto b) { return a->identifier_in_text < b->identifier_in_text; });
  const std::size_t n = std::max(records.size(), mofs.size());
  if (records.empty() || mofs.empty()) return {};
  std::vector<std::vector<MatchScore>> scores(records.size());
  std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t j = 0; j < mofs.size(); ++j) {
      scores[i].push_back(score_pair(records[i], *mofs[j], info.abbreviations, w));
      double s = scores[i][j].score;
      cost[i][j] = s >= w.threshold ? -s : 0.0;
    }
  auto col = match_detail::hungarian(cost);
  std::vector<MatchScore> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto j = static_cast<std::size_t>(col[i]);
    if (j < mofs.size() && scores[i][j].score >= w.threshold) out.push_back(scores[i][j]);
  }
  return out;
}

// ===================================================================
// Missing MOFs
// ===================================================================

enum class Transformation { metal_substitution, linker_exchange, solvent_exchange, linker_functionalization, other };

inline std::string_view transformation_name(Transformation t) {
  switch (t) {
    case Transformation::metal_substitution: return "metal_substitution";
    case Transformation::linker_exchange: return "linker_exchange";
    case Transformation::solvent_exchange: return "solvent_exchange";
    case Transformation::linker_functionalization: return "linker_functionalization";
    case Transformation::other: return "other";
  }
  return "other";
}

inline std::optional<Transformation> parse_transformation(std::string_view s) {
  for (auto t : {Transformation::metal_substitution, Transformation::linker_exchange, Transformation::solvent_exchange,
                 Transformation::linker_functionalization, Transformation::other})
    if (transformation_name(t) == s) return t;
  return std::nullopt;
}

struct MissingMofRecord {
  std::string identifier_in_text;
  std::string parent_mof;  ///< matched refcode or matched paper identifier
  Transformation transformation = Transformation::other;
  std::string transformation_details;
  std::string reason_no_cif;
};

/// Throws ValidationError unless every record names an unmatched MOF of the
/// paper and a parent inside the matched set.
inline void validate_missing_records(const std::vector<MissingMofRecord>& recs, const PaperInfo& info,
                                     const std::vector<MatchScore>& matched) {
  std::set<std::string> matched_ids, refcodes, seen;
  for (const auto& m : matched) {
    matched_ids.insert(m.mof_id);
    refcodes.insert(m.refcode);
  }
  for (const auto& r : recs) {
    if (!info.find(r.identifier_in_text)) fail(Errc::ValidationError, "unknown MOF identifier " + r.identifier_in_text);
    if (matched_ids.count(r.identifier_in_text))
      fail(Errc::ValidationError, r.identifier_in_text + " is matched and cannot be missing");
    if (!seen.insert(r.identifier_in_text).second) fail(Errc::ValidationError, "duplicate record for " + r.identifier_in_text);
    if (!matched_ids.count(r.parent_mof) && !refcodes.count(r.parent_mof))
      fail(Errc::ValidationError, r.identifier_in_text + ": parent '" + r.parent_mof + "' is not a matched MOF of this paper");
  }
}

/// Refcode of a record's parent (the parent may be named by identifier).
inline std::string parent_refcode(const MissingMofRecord& r, const std::vector<MatchScore>& matched) {
  for (const auto& m : matched)
    if (m.refcode == r.parent_mof || m.mof_id == r.parent_mof) return m.refcode;
  fail(Errc::ValidationError, "parent " + r.parent_mof + " is not matched");
}

inline const json& missing_mof_schema() {
  static const json schema = json::parse(R"({
    "type": "object", "required": ["records"],
    "properties": {"records": {"type": "array", "items": {
      "type": "object",
      "required": ["identifier_in_text", "parent_mof", "transformation", "transformation_details"],
      "properties": {
        "identifier_in_text": {"type": "string"},
        "parent_mof": {"type": "string"},
        "transformation": {"enum": ["metal_substitution", "linker_exchange", "solvent_exchange",
                                    "linker_functionalization", "other"]},
        "transformation_details": {"type": "string"},
        "reason_no_cif": {"type": "string"}}}}}})");
  return schema;
}

inline std::vector<MissingMofRecord> missing_records_from_json(const json& j) {
  if (!j.is_object() || !j.contains("records") || !j["records"].is_array())
    fail(Errc::ValidationError, "expected an object with a 'records' array");
  std::vector<MissingMofRecord> out;
  for (const auto& r : j["records"]) {
    if (!r.is_object()) fail(Errc::ValidationError, "record must be an object");
    MissingMofRecord m;
    m.identifier_in_text = paper_detail::str_field(r, "identifier_in_text");
    m.parent_mof = paper_detail::str_field(r, "parent_mof");
    auto t = parse_transformation(paper_detail::str_field(r, "transformation"));
    if (!t) fail(Errc::ValidationError, "transformation must be one of the listed kinds");
    m.transformation = *t;
    m.transformation_details = paper_detail::str_field(r, "transformation_details");
    m.reason_no_cif = paper_detail::str_field(r, "reason_no_cif");
    out.push_back(std::move(m));
  }
  return out;
}

/// Request payload: the paper's extracted info plus the matched pairs and the
/// identifiers that need a parent.
inline json missing_mof_context(const PaperInfo& info, const std::vector<MatchScore>& matched,
                                const std::vector<std::string>& unmatched) {
  json m = json::array();
  for (const auto& s : matched) m.push_back({{"refcode", s.refcode}, {"identifier_in_text", s.mof_id}});
  return {{"paper", paper_info_json(info)}, {"matched", m}, {"unmatched", unmatched}};
}

/// Unmatched extracted MOFs become MissingMofRecords; the backend names the
/// parent and the transformation. Returns an empty list without a backend
/// call when everything matched.
inline std::vector<MissingMofRecord> find_missing_mofs(const PaperInfo& info, const std::vector<MatchScore>& matched,
                                                       agents::ChatBackend& backend, const ExtractOptions& opt = {}) {
  std::set<std::string> ids;
  for (const auto& m : matched) ids.insert(m.mof_id);
  std::vector<std::string> unmatched;
  for (const auto& m : info.mofs)
    if (!ids.count(m.identifier_in_text)) unmatched.push_back(m.identifier_in_text);
  std::sort(unmatched.begin(), unmatched.end());
  if (unmatched.empty()) return {};
  agents::ChatRequest req{opt.agent, "find_missing", opt.signature,
                          {{"system",
                            "For every unmatched MOF, name its parent (the most structurally similar matched MOF, by "
                            "refcode) and the transformation that relates them. Return JSON matching the schema."},
                           {"user", missing_mof_context(info, matched, unmatched).dump()}},
                          missing_mof_schema()};
  return agents::structured_call(
      backend, req,
      [&](const json& j) {
        auto recs = missing_records_from_json(j);
        validate_missing_records(recs, info, matched);
        std::set<std::string> covered;
        for (const auto& r : recs) covered.insert(r.identifier_in_text);
        for (const auto& u : unmatched)
          if (!covered.count(u)) fail(Errc::ValidationError, "no record for unmatched MOF " + u);
        std::sort(recs.begin(), recs.end(),
                  [](const auto& a, const auto& b) { return a.identifier_in_text < b.identifier_in_text; });
        return recs;
      },
      opt.max_retries, Errc::ExtractionSchemaFailure);
}

/// Structured-text report, one blank-line separated block per record.
inline std::string write_missing_report(const std::vector<MissingMofRecord>& recs) {
  std::ostringstream o;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    if (i) o << '\n';
    o << "identifier_in_text = " << r.identifier_in_text << '\n'
      << "parent_mof = " << r.parent_mof << '\n'
      << "transformation = " << transformation_name(r.transformation) << '\n'
      << "transformation_details = " << r.transformation_details << '\n'
      << "reason_no_cif = " << r.reason_no_cif << '\n';
  }
  return o.str();
}

// ===================================================================
// Transformations
// ===================================================================

inline constexpr const char* kGeneratedProvenance = "generated-by-transformation";

/// Source and target metals from text such as "Eu→Tb", "Eu->Tb", "Eu to Tb",
/// or "replace Eu with Tb".
inline std::pair<Element, Element> parse_metal_substitution(const std::string& details) {
  static const std::regex arrow(R"(([A-Z][a-z]?)\s*(?:\xE2\x86\x92|->|=>|\bto\b)\s*([A-Z][a-z]?))");
  static const std::regex replace(R"(replac\w*\s+([A-Z][a-z]?)\s+(?:with|by)\s+([A-Z][a-z]?))", std::regex::icase);
  std::smatch m;
  if (std::regex_search(details, m, arrow) || std::regex_search(details, m, replace)) {
    auto a = Element::from_symbol(m[1].str()), b = Element::from_symbol(m[2].str());
    if (a && b && a->is_metal() && b->is_metal()) return {*a, *b};
  }
  fail(Errc::UnparseableTransformationDetails, "cannot read a metal substitution from '" + details + "'");
}

/// Solvent names to remove: the left side of an arrow when present,
/// otherwise every library solvent named in the text.
inline std::vector<std::string> parse_solvent_exchange(const std::string& details, const SolventLibrary& lib) {
  std::string scope = details;
  for (const char* arrow : {"\xE2\x86\x92", "->", "=>", " for ", " with ", " by "})
    if (auto p = details.find(arrow); p != std::string::npos) {
      scope = details.substr(0, p);
      break;
    }
  static const std::map<std::string, std::string> aliases{{"h2o", "water"}, {"meoh", "methanol"}, {"etoh", "ethanol"},
                                                          {"mecn", "acetonitrile"}};
  std::vector<std::string> out;
  std::string low = sources_detail::lower(scope);
  std::regex word(R"([A-Za-z0-9,\-]+)");
  for (auto it = std::sregex_iterator(low.begin(), low.end(), word); it != std::sregex_iterator(); ++it) {
    std::string w = it->str();
    if (auto a = aliases.find(w); a != aliases.end()) w = a->second;
    for (const auto& e : lib.entries())
      if (sources_detail::lower(e.name) == w && std::find(out.begin(), out.end(), e.name) == out.end()) out.push_back(e.name);
  }
  if (out.empty()) fail(Errc::UnparseableTransformationDetails, "no known solvent named in '" + details + "'");
  return out;
}

/// Builds the missing MOF from its parent. Metal substitution relabels atoms
/// and keeps geometry and bonds; solvent exchange removes the named free
/// solvent (no insertion). Linker changes are not supported.
inline CrystalStructure apply_transformation(const CrystalStructure& parent, const MissingMofRecord& rec,
                                             const BondPolicy& policy = {},
                                             const SolventLibrary& lib = SolventLibrary::defaults()) {
  CrystalStructure out;
  switch (rec.transformation) {
    case Transformation::metal_substitution: {
      auto [from, to] = parse_metal_substitution(rec.transformation_details);
      out = parent;
      std::size_t n = 0;
      std::string fs(from.symbol()), ts(to.symbol());
      for (auto& site : out.sites) {
        if (site.element != from) continue;
        site.element = to;
        if (site.label.rfind(fs, 0) == 0 &&
            (site.label.size() == fs.size() || !std::islower(static_cast<unsigned char>(site.label[fs.size()]))))
          site.label = ts + site.label.substr(fs.size());
        ++n;
      }
      if (n == 0)
        fail(Errc::UnparseableTransformationDetails, "parent " + parent.name + " contains no " + fs);
      std::set<std::string> labels;
      for (const auto& s : out.sites)
        if (!labels.insert(s.label).second) fail(Errc::InvalidStructure, "label clash after substitution: " + s.label);
      break;
    }
    case Transformation::solvent_exchange: {
      auto names = parse_solvent_exchange(rec.transformation_details, lib);
      std::vector<MolecularGraph> graphs;
      for (const auto& e : lib.entries())
        if (std::find(names.begin(), names.end(), e.name) != names.end()) graphs.push_back(e.graph);
      out = remove_free_solvent(parent, policy, graphs).structure;
      break;
    }
    case Transformation::linker_exchange:
    case Transformation::linker_functionalization:
      fail(Errc::Unsupported, std::string(transformation_name(rec.transformation)) +
                                  " needs new linker geometry, which cannot be derived from the parent alone");
    case Transformation::other:
      fail(Errc::Unsupported, "transformation 'other' has no automatic procedure");
  }
  out.name = rec.identifier_in_text.empty() ? parent.name : rec.identifier_in_text;
  out.provenance = kGeneratedProvenance;
  return out;
}

}  // namespace mofcure
