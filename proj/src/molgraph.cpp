// Copyright 2026 The Infomax3D Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "infomax3d/molgraph.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace infomax3d {

namespace {

constexpr std::array<std::string_view, 119> kSymbols = {
    "",   "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",
    "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn",
    "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho",
    "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po",
    "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md",
    "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc{}) {
    throw std::runtime_error("format_double: conversion failed");
  }
  return std::string(buf.data(), end);
}

char bond_order_code(BondOrder o) {
  switch (o) {
    case BondOrder::kSingle: return '1';
    case BondOrder::kDouble: return '2';
    case BondOrder::kTriple: return '3';
    case BondOrder::kAromatic: return 'a';
  }
  return '1';
}

// Parses one record line. Columns are 1-based byte offsets into the line.
class RecordParser {
 public:
  RecordParser(std::string_view line, std::size_t line_no) : line_(line), line_no_(line_no) {}

  struct Record {
    MolecularGraph                                 graph;
    std::vector<std::pair<std::string, double>>    targets;
  };

  Record parse() {
    Record                 rec;
    std::vector<Tensor>    coords;
    std::vector<double>    energies, weights;
    std::vector<int>       charges;
    bool                   have_energies = false, have_weights = false, have_charges = false;
    std::set<std::string>  seen;
    std::size_t            energies_col = 0, weights_col = 0, charges_col = 0;
    std::vector<std::size_t> coords_cols;

    for (const auto& [start, end] : split_top_level(0, line_.size(), ';')) {
      auto [fs, fe] = trim(start, end);
      if (fs == fe) continue;
      const auto eq = line_.find('=', fs);
      if (eq == std::string_view::npos || eq >= fe) {
        fail(fs, "expected key=value");
      }
      auto [ks, ke]     = trim(fs, eq);
      auto [vs, ve]     = trim(eq + 1, fe);
      const std::string key(line_.substr(ks, ke - ks));
      if (key != "coords3d" && !seen.insert(key).second) {
        fail(ks, "duplicate field '" + key + "'");
      }
      if (key == "id") {
        if (vs == ve) fail(vs, "empty id");
        rec.graph.id = std::string(line_.substr(vs, ve - vs));
      } else if (key == "atoms") {
        for (const auto& [s, e] : split_list(vs, ve)) {
          const std::string_view sym = line_.substr(s, e - s);
          const int              z   = atomic_number(sym);
          if (z == 0) fail(s, "unknown element symbol '" + std::string(sym) + "'");
          rec.graph.atoms.push_back(Atom{z, 0, 0});
        }
      } else if (key == "bonds") {
        for (const auto& [s, e] : split_list(vs, ve)) rec.graph.bonds.push_back(parse_bond(s, e));
      } else if (key == "charges") {
        have_charges = true;
        charges_col  = vs;
        for (const auto& [s, e] : split_list(vs, ve)) charges.push_back(parse_int(s, e));
      } else if (key == "coords3d") {
        coords_cols.push_back(vs);
        coords.push_back(parse_coords(vs, ve));
      } else if (key == "energies") {
        have_energies = true;
        energies_col  = vs;
        for (const auto& [s, e] : split_list(vs, ve)) energies.push_back(parse_real(s, e));
      } else if (key == "weights") {
        have_weights = true;
        weights_col  = vs;
        for (const auto& [s, e] : split_list(vs, ve)) weights.push_back(parse_real(s, e));
      } else if (key == "targets") {
        for (const auto& [s, e] : split_list(vs, ve)) {
          const auto colon = line_.find(':', s);
          if (colon == std::string_view::npos || colon >= e) fail(s, "expected name:value in targets");
          auto [ns, ne] = trim(s, colon);
          if (ns == ne) fail(s, "empty target name");
          rec.targets.emplace_back(std::string(line_.substr(ns, ne - ns)), parse_real(colon + 1, e));
        }
      } else {
        fail(ks, "unknown field '" + key + "'");
      }
    }

    if (rec.graph.id.empty()) fail(0, "missing field 'id'");
    if (rec.graph.atoms.empty()) fail(0, "missing or empty field 'atoms'");
    const std::size_t n = rec.graph.atoms.size();

    if (have_charges) {
      if (charges.size() != n) {
        fail(charges_col, "charges has " + std::to_string(charges.size()) + " entries for " + std::to_string(n) +
                              " atoms");
      }
      for (std::size_t i = 0; i < n; ++i) rec.graph.atoms[i].formal_charge = charges[i];
    }

    std::set<std::pair<std::size_t, std::size_t>> bond_keys;
    for (const auto& b : rec.graph.bonds) {
      if (b.u >= n || b.v >= n) {
        fail(bond_col_, "atom index out of range: bond " + std::to_string(b.u) + "-" + std::to_string(b.v) + " on " +
                            std::to_string(n) + "-atom molecule");
      }
      if (!bond_keys.insert(std::minmax(b.u, b.v)).second) {
        fail(bond_col_, "duplicate bond " + std::to_string(b.u) + "-" + std::to_string(b.v));
      }
    }
    rec.graph.recompute_degrees();

    if (!coords.empty()) {
      for (std::size_t j = 0; j < coords.size(); ++j) {
        if (coords[j].rows() != n) {
          fail(coords_cols[j], "coords3d has " + std::to_string(coords[j].rows()) + " points for " +
                                   std::to_string(n) + " atoms");
        }
      }
      if (have_energies && energies.size() != coords.size()) {
        fail(energies_col, "energies has " + std::to_string(energies.size()) + " entries for " +
                               std::to_string(coords.size()) + " conformers");
      }
      if (have_weights && weights.size() != coords.size()) {
        fail(weights_col, "weights has " + std::to_string(weights.size()) + " entries for " +
                              std::to_string(coords.size()) + " conformers");
      }
      std::vector<Conformer> confs;
      for (std::size_t j = 0; j < coords.size(); ++j) {
        Conformer c{std::move(coords[j]), {}, {}};
        if (have_energies) c.energy = energies[j];
        if (have_weights) c.weight = weights[j];
        confs.push_back(std::move(c));
      }
      ConformerSet set(std::move(confs));
      try {
        set.validate();
      } catch (const std::invalid_argument& e) {
        fail(coords_cols.front(), e.what());
      }
      rec.graph.conformers = std::move(set);
    } else if (have_energies || have_weights) {
      fail(have_energies ? energies_col : weights_col, "energies/weights given without coords3d");
    }
    return rec;
  }

 private:
  using Range = std::pair<std::size_t, std::size_t>;

  [[noreturn]] void fail(std::size_t offset, const std::string& msg) const { throw ParseError(line_no_, offset + 1, msg); }

  Range trim(std::size_t s, std::size_t e) const {
    while (s < e && std::isspace(static_cast<unsigned char>(line_[s]))) ++s;
    while (e > s && std::isspace(static_cast<unsigned char>(line_[e - 1]))) --e;
    return {s, e};
  }

  std::vector<Range> split_top_level(std::size_t s, std::size_t e, char sep) const {
    std::vector<Range> out;
    int                depth = 0;
    std::size_t        start = s;
    for (std::size_t i = s; i < e; ++i) {
      const char ch = line_[i];
      if (ch == '[' || ch == '(') ++depth;
      if (ch == ']' || ch == ')') {
        if (--depth < 0) fail(i, "unbalanced bracket");
      }
      if (ch == sep && depth == 0) {
        out.emplace_back(start, i);
        start = i + 1;
      }
    }
    if (depth != 0) fail(e == 0 ? 0 : e - 1, "unbalanced bracket");
    out.emplace_back(start, e);
    return out;
  }

  // Comma list; an empty value is an empty list.
  std::vector<Range> split_list(std::size_t s, std::size_t e) const {
    std::vector<Range> out;
    if (s == e) return out;
    for (auto [is, ie] : split_top_level(s, e, ',')) {
      auto r = trim(is, ie);
      if (r.first == r.second) fail(is, "empty list element");
      out.push_back(r);
    }
    return out;
  }

  double parse_real(std::size_t s, std::size_t e) const {
    auto [ts, te] = trim(s, e);
    double      v = 0.0;
    const char* b = line_.data() + ts;
    const char* x = line_.data() + te;
    if (ts < te && *b == '+') ++b;
    auto [p, ec] = std::from_chars(b, x, v);
    if (ec != std::errc{} || p != x) fail(ts, "expected a real number, got '" + std::string(line_.substr(ts, te - ts)) + "'");
    if (!std::isfinite(v)) fail(ts, "non-finite number");
    return v;
  }

  long long parse_integer(std::size_t s, std::size_t e) const {
    auto [ts, te] = trim(s, e);
    long long   v = 0;
    const char* b = line_.data() + ts;
    const char* x = line_.data() + te;
    if (ts < te && *b == '+') ++b;
    auto [p, ec] = std::from_chars(b, x, v);
    if (ec != std::errc{} || p != x) fail(ts, "expected an integer, got '" + std::string(line_.substr(ts, te - ts)) + "'");
    return v;
  }

  int parse_int(std::size_t s, std::size_t e) const { return static_cast<int>(parse_integer(s, e)); }

  Bond parse_bond(std::size_t s, std::size_t e) {
    bond_col_        = s;
    const auto dash  = line_.find('-', s);
    const auto colon = line_.find(':', s);
    if (dash == std::string_view::npos || colon == std::string_view::npos || dash >= colon || colon >= e) {
      fail(s, "expected bond as u-v:order");
    }
    const long long u = parse_integer(s, dash);
    const long long v = parse_integer(dash + 1, colon);
    if (u < 0 || v < 0) fail(s, "atom index out of range: negative index");
    if (u == v) fail(s, "self-loop bond " + std::to_string(u) + "-" + std::to_string(v));
    auto [os, oe]               = trim(colon + 1, e);
    const std::string_view code = line_.substr(os, oe - os);
    BondOrder              order;
    if (code == "1") {
      order = BondOrder::kSingle;
    } else if (code == "2") {
      order = BondOrder::kDouble;
    } else if (code == "3") {
      order = BondOrder::kTriple;
    } else if (code == "a" || code == "ar" || code == "1.5") {
      order = BondOrder::kAromatic;
    } else {
      fail(os, "unknown bond order '" + std::string(code) + "' (use 1, 2, 3 or a)");
    }
    return Bond{static_cast<std::size_t>(u), static_cast<std::size_t>(v), order};
  }

  Tensor parse_coords(std::size_t s, std::size_t e) const {
    if (s == e || line_[s] != '[' || line_[e - 1] != ']') fail(s, "coords3d must be [(x,y,z),...]");
    std::vector<double> data;
    std::size_t         rows = 0;
    for (const auto& [ps, pe] : split_list(s + 1, e - 1)) {
      if (line_[ps] != '(' || line_[pe - 1] != ')') fail(ps, "expected a point (x,y,z)");
      const auto parts = split_list(ps + 1, pe - 1);
      if (parts.size() != 3) fail(ps, "point must have exactly 3 coordinates");
      for (const auto& [cs, ce] : parts) data.push_back(parse_real(cs, ce));
      ++rows;
    }
    return Tensor(rows, 3, std::move(data));
  }

  std::string_view line_;
  std::size_t      line_no_;
  std::size_t      bond_col_ = 0;
};

void one_hot(std::span<double> row, std::size_t offset, std::size_t bucket) { row[offset + bucket] = 1.0; }

}  // namespace

// ---------------------------------------------------------------------------

int atomic_number(std::string_view symbol) {
  for (std::size_t z = 1; z < kSymbols.size(); ++z) {
    if (kSymbols[z] == symbol) return static_cast<int>(z);
  }
  return 0;
}

std::string_view element_symbol(int z) {
  if (z < 1 || z >= static_cast<int>(kSymbols.size())) {
    throw std::out_of_range("element_symbol: atomic number " + std::to_string(z) + " outside [1, 118]");
  }
  return kSymbols[static_cast<std::size_t>(z)];
}

ParseError::ParseError(std::size_t line, std::size_t column, const std::string& message)
    : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) + ": " + message),
      line_(line),
      column_(column),
      message_(message) {}

bool MolecularGraph::featurized() const {
  return atom_features.rows() == atoms.size() && atom_features.cols() == kAtomFeatureDim &&
         bond_features.rows() == bonds.size() && (bonds.empty() || bond_features.cols() == kBondFeatureDim);
}

void MolecularGraph::recompute_degrees() {
  for (auto& a : atoms) a.degree = 0;
  for (const auto& b : bonds) {
    ++atoms[b.u].degree;
    ++atoms[b.v].degree;
  }
}

void MolecularGraph::validate() const {
  const std::size_t n = atoms.size();
  if (n == 0) throw std::invalid_argument("molecule '" + id + "' has no atoms");
  std::vector<int> degree(n, 0);
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& b : bonds) {
    if (b.u >= n || b.v >= n) throw std::invalid_argument("molecule '" + id + "': atom index out of range");
    if (b.u == b.v) throw std::invalid_argument("molecule '" + id + "': self-loop");
    if (!seen.insert(std::minmax(b.u, b.v)).second) throw std::invalid_argument("molecule '" + id + "': duplicate bond");
    ++degree[b.u];
    ++degree[b.v];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (atoms[i].atomic_number < 1 || atoms[i].atomic_number > 118) {
      throw std::invalid_argument("molecule '" + id + "': atomic number outside [1, 118]");
    }
    if (atoms[i].degree != degree[i]) throw std::invalid_argument("molecule '" + id + "': stale atom degree");
  }
  if (!atom_features.empty() && atom_features.rows() != n) {
    throw std::invalid_argument("molecule '" + id + "': atom feature rows do not match atoms");
  }
  if (!bond_features.empty() && bond_features.rows() != bonds.size()) {
    throw std::invalid_argument("molecule '" + id + "': bond feature rows do not match bonds");
  }
  if (conformers) {
    conformers->validate();
    if (conformers->num_atoms() != n) {
      throw std::invalid_argument("molecule '" + id + "': conformer atom count does not match graph");
    }
  }
}

std::size_t Dataset::target_index(std::string_view name) const {
  for (std::size_t i = 0; i < target_names.size(); ++i) {
    if (target_names[i] == name) return i;
  }
  std::string known;
  for (const auto& t : target_names) known += (known.empty() ? "" : ", ") + t;
  throw std::out_of_range("unknown target '" + std::string(name) + "' (dataset has: " +
                          (known.empty() ? std::string("none") : known) + ")");
}

// ---------------------------------------------------------------------------

Dataset parse_dataset_text(std::string_view text) {
  Dataset                         ds;
  std::unordered_set<std::string> ids;
  bool                            first = true;
  std::size_t                     line_no = 0;
  std::size_t                     pos     = 0;
  while (pos <= text.size()) {
    const auto       nl   = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos                   = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first_char = line.find_first_not_of(" \t");
    if (first_char == std::string_view::npos || line[first_char] == '#') continue;

    auto rec = RecordParser(line, line_no).parse();
    if (!ids.insert(rec.graph.id).second) {
      throw ParseError(line_no, 1, "duplicate molecule id '" + rec.graph.id + "'");
    }
    std::vector<std::string> names;
    for (const auto& [name, _] : rec.targets) names.push_back(name);
    if (first) {
      ds.target_names = names;
      first           = false;
    }
    if (names.size() != ds.target_names.size()) {
      throw ParseError(line_no, 1, "record targets do not match the dataset's target names");
    }
    rec.graph.targets.assign(ds.target_names.size(), 0.0);
    for (const auto& [name, value] : rec.targets) {
      auto it = std::find(ds.target_names.begin(), ds.target_names.end(), name);
      if (it == ds.target_names.end()) {
        throw ParseError(line_no, 1, "target '" + name + "' not present in the first record");
      }
      rec.graph.targets[static_cast<std::size_t>(it - ds.target_names.begin())] = value;
    }
    ds.molecules.push_back(std::move(rec.graph));
  }
  ds.target_stats = compute_target_stats(ds);
  return ds;
}

Dataset parse_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open dataset file '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw std::runtime_error("I/O error reading '" + path.string() + "'");
  }
  return parse_dataset_text(buf.str());
}

std::string serialize_record(const MolecularGraph& g, const std::vector<std::string>& target_names) {
  std::string out = "id=" + g.id + "; atoms=";
  for (std::size_t i = 0; i < g.atoms.size(); ++i) {
    if (i) out += ',';
    out += element_symbol(g.atoms[i].atomic_number);
  }
  out += "; bonds=";
  for (std::size_t i = 0; i < g.bonds.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(g.bonds[i].u) + "-" + std::to_string(g.bonds[i].v) + ":" + bond_order_code(g.bonds[i].order);
  }
  if (std::any_of(g.atoms.begin(), g.atoms.end(), [](const Atom& a) { return a.formal_charge != 0; })) {
    out += "; charges=";
    for (std::size_t i = 0; i < g.atoms.size(); ++i) {
      if (i) out += ',';
      out += std::to_string(g.atoms[i].formal_charge);
    }
  }
  if (g.conformers) {
    for (const auto& c : g.conformers->conformers()) {
      out += "; coords3d=[";
      for (std::size_t r = 0; r < c.coords.rows(); ++r) {
        if (r) out += ',';
        out += "(" + format_double(c.coords(r, 0)) + "," + format_double(c.coords(r, 1)) + "," +
               format_double(c.coords(r, 2)) + ")";
      }
      out += ']';
    }
    if (g.conformers->has_energies()) {
      out += "; energies=";
      for (std::size_t j = 0; j < g.conformers->size(); ++j) {
        if (j) out += ',';
        out += format_double(*(*g.conformers)[j].energy);
      }
    }
    if (g.conformers->has_weights()) {
      out += "; weights=";
      for (std::size_t j = 0; j < g.conformers->size(); ++j) {
        if (j) out += ',';
        out += format_double(*(*g.conformers)[j].weight);
      }
    }
  }
  if (!target_names.empty()) {
    out += "; targets=";
    for (std::size_t t = 0; t < target_names.size(); ++t) {
      if (t) out += ',';
      out += target_names[t] + ":" + format_double(g.targets.at(t));
    }
  }
  return out;
}

std::string serialize_dataset(const Dataset& dataset) {
  std::string out;
  for (const auto& g : dataset.molecules) {
    out += serialize_record(g, dataset.target_names);
    out += '\n';
  }
  return out;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write dataset file '" + path.string() + "'");
  }
  out << serialize_dataset(dataset);
  if (!out) {
    throw std::runtime_error("I/O error writing '" + path.string() + "'");
  }
}

// ---------------------------------------------------------------------------

MolecularGraph featurize(MolecularGraph graph, FeatureScheme /*scheme*/) {
  graph.validate();
  const std::size_t n = graph.atoms.size();
  graph.atom_features = Tensor(n, kAtomFeatureDim);
  for (std::size_t i = 0; i < n; ++i) {
    const Atom& a   = graph.atoms[i];
    auto        row = graph.atom_features.row_span(i);
    const auto  z   = static_cast<std::size_t>(a.atomic_number);
    one_hot(row, 0, z >= 1 && z <= 36 ? z - 1 : 36);
    one_hot(row, kAtomicNumberBuckets, static_cast<std::size_t>(std::min(a.degree, 6)));
    const int q = a.formal_charge;
    one_hot(row, kAtomicNumberBuckets + kDegreeBuckets, q >= -2 && q <= 2 ? static_cast<std::size_t>(q + 2) : 5);
  }
  graph.bond_features = Tensor(graph.bonds.size(), kBondFeatureDim);
  for (std::size_t e = 0; e < graph.bonds.size(); ++e) {
    graph.bond_features(e, static_cast<std::size_t>(graph.bonds[e].order)) = 1.0;
  }
  return graph;
}

void featurize_all(Dataset& dataset, FeatureScheme scheme) {
  for (auto& g : dataset.molecules) g = featurize(std::move(g), scheme);
}

std::vector<TargetStats> compute_target_stats(const Dataset& dataset) {
  std::vector<TargetStats> stats(dataset.target_names.size());
  const auto               n = static_cast<double>(dataset.molecules.size());
  if (n == 0) return stats;
  for (std::size_t t = 0; t < stats.size(); ++t) {
    double mean = 0.0;
    for (const auto& g : dataset.molecules) mean += g.targets[t];
    mean /= n;
    double var = 0.0;
    for (const auto& g : dataset.molecules) var += (g.targets[t] - mean) * (g.targets[t] - mean);
    var /= n;
    const double sd = std::sqrt(var);
    stats[t]        = TargetStats{mean, sd > 1e-12 ? sd : 1.0};
  }
  return stats;
}

DatasetSplit split_random(const Dataset& dataset, SplitRatios ratios, std::uint64_t seed) {
  if (!(ratios.train > 0 && ratios.val > 0 && ratios.test > 0)) {
    throw std::invalid_argument("split_random: ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw std::invalid_argument("split_random: ratios must sum to 1");
  }
  const std::size_t n = dataset.size();
  // The small slack keeps products such as 0.29 * 100 from flooring to 28.
  const auto n_train = static_cast<std::size_t>(std::floor(ratios.train * static_cast<double>(n) + 1e-9));
  const auto n_val   = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw std::invalid_argument("split_random: a split would be empty for " + std::to_string(n) + " molecules");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  DatasetSplit out;
  for (Dataset* part : {&out.train, &out.val, &out.test}) part->target_names = dataset.target_names;
  for (std::size_t i = 0; i < n; ++i) {
    Dataset& dst = i < n_train ? out.train : (i < n_train + n_val ? out.val : out.test);
    dst.molecules.push_back(dataset.molecules[order[i]]);
  }
  const auto stats = compute_target_stats(out.train);
  for (Dataset* part : {&out.train, &out.val, &out.test}) part->target_stats = stats;
  return out;
}

MolecularGraph node_drop(const MolecularGraph& graph, double ratio, std::mt19937_64& rng) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw std::invalid_argument("node_drop: ratio must be in [0, 1)");
  }
  const std::size_t n    = graph.num_atoms();
  const auto        drop = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  if (drop >= n) {
    throw std::invalid_argument("node_drop: ratio " + std::to_string(ratio) + " would remove every atom of '" +
                                graph.id + "'");
  }
  if (drop == 0) {
    return graph;
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> removed(n, false);
  for (std::size_t i = 0; i < drop; ++i) removed[order[i]] = true;

  constexpr auto           kGone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> remap(n, kGone);
  std::vector<std::size_t> kept;
  for (std::size_t i = 0; i < n; ++i) {
    if (!removed[i]) {
      remap[i] = kept.size();
      kept.push_back(i);
    }
  }

  MolecularGraph out;
  out.id      = graph.id;
  out.targets = graph.targets;
  for (std::size_t i : kept) out.atoms.push_back(graph.atoms[i]);
  for (const auto& b : graph.bonds) {
    if (remap[b.u] != kGone && remap[b.v] != kGone) out.bonds.push_back(Bond{remap[b.u], remap[b.v], b.order});
  }
  out.recompute_degrees();
  if (graph.conformers) {
    std::vector<Conformer> confs;
    for (const auto& c : graph.conformers->conformers()) {
      confs.push_back(Conformer{select_rows(c.coords, kept), c.energy, c.weight});
    }
    out.conformers = ConformerSet(std::move(confs));
  }
  if (graph.featurized()) {
    out = featurize(std::move(out));
  }
  out.validate();
  return out;
}

}  // namespace infomax3d
