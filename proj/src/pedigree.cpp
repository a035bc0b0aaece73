#include "pedmr/pedigree.hpp"

#include "pedmr/error.hpp"
#include "pedmr/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>

namespace pedmr {

namespace {

Sex parse_sex(const std::string& s) {
  if (s == "1") return Sex::male;
  if (s == "2") return Sex::female;
  return Sex::unknown;
}

std::optional<std::string> parent_field(const std::string& s) {
  if (s == "0" || s.empty()) return std::nullopt;
  return s;
}

}  // namespace

Pedigree::Pedigree(std::vector<Member> members) : members_(std::move(members)) {
  for (std::size_t i = 0; i < members_.size(); ++i) {
    const auto& m = members_[i];
    if (!index_.emplace(m.id, i).second) {
      throw Error("pedigree.duplicate_id", "duplicate individual id '" + m.id + "'");
    }
    if (std::find(families_.begin(), families_.end(), m.family) == families_.end()) {
      families_.push_back(m.family);
    }
  }

  for (const auto& m : members_) {
    if (m.father.has_value() != m.mother.has_value()) {
      throw Error("pedigree.single_parent",
                  "individual '" + m.id + "' has exactly one parent specified");
    }
    for (const auto* parent : {&m.father, &m.mother}) {
      if (!parent->has_value()) continue;
      auto it = index_.find(**parent);
      if (it == index_.end() || members_[it->second].family != m.family) {
        throw Error("pedigree.dangling_parent",
                    "individual '" + m.id + "' references parent '" + **parent +
                        "' not present in family '" + m.family + "'");
      }
    }
  }

  // Kahn's algorithm; a leftover individual means a parent cycle.
  const std::size_t n = members_.size();
  std::vector<int> pending(n, 0);
  std::vector<std::vector<std::size_t>> children(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& m = members_[i];
    if (m.is_founder()) continue;
    const auto f = index_.at(*m.father);
    const auto mo = index_.at(*m.mother);
    children[f].push_back(i);
    ++pending[i];
    if (mo != f) {
      children[mo].push_back(i);
      ++pending[i];
    } else {
      throw Error("pedigree.cycle", "individual '" + m.id + "' lists the same parent twice");
    }
  }
  topo_.reserve(n);
  std::vector<std::size_t> ready;
  for (std::size_t i = n; i-- > 0;) {
    if (pending[i] == 0) ready.push_back(i);
  }
  while (!ready.empty()) {
    const auto i = ready.back();
    ready.pop_back();
    topo_.push_back(i);
    // Push in reverse so lower file indices come out first.
    for (auto it = children[i].rbegin(); it != children[i].rend(); ++it) {
      if (--pending[*it] == 0) ready.push_back(*it);
    }
  }
  if (topo_.size() != n) {
    for (std::size_t i = 0; i < n; ++i) {
      if (pending[i] > 0) {
        throw Error("pedigree.cycle",
                    "parent links form a cycle involving individual '" + members_[i].id + "'");
      }
    }
  }
}

std::optional<std::size_t> Pedigree::index_of(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

Pedigree parse_pedigree(std::istream& in) {
  std::vector<Member> members;
  std::size_t line_no = 0;
  for (const auto& row : io::read_rows(in)) {
    ++line_no;
    if (row.size() < 5) {
      throw Error("pedigree.parse", "pedigree row " + std::to_string(line_no) +
                                        " has fewer than 5 columns");
    }
    if (line_no == 1 && (row[1] == "id" || row[1] == "iid") && row[0] != "0") {
      // Optional header row.
      continue;
    }
    Member m;
    m.family = row[0];
    m.id = row[1];
    m.father = parent_field(row[2]);
    m.mother = parent_field(row[3]);
    m.sex = parse_sex(row[4]);
    members.push_back(std::move(m));
  }
  return Pedigree(std::move(members));
}

KinshipMatrix KinshipMatrix::subset(const std::vector<std::string>& ids) const {
  std::unordered_map<std::string, Eigen::Index> pos;
  for (std::size_t i = 0; i < order.size(); ++i) pos.emplace(order[i], static_cast<Eigen::Index>(i));
  std::vector<Eigen::Index> idx;
  idx.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = pos.find(id);
    if (it == pos.end()) throw Error("pedigree.unknown_id", "id '" + id + "' not in kinship matrix");
    idx.push_back(it->second);
  }
  KinshipMatrix out;
  out.order = ids;
  out.scale = scale;
  const auto n = static_cast<Eigen::Index>(idx.size());
  out.values.resize(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) out.values(a, b) = values(idx[a], idx[b]);
  return out;
}

Eigen::MatrixXd KinshipMatrix::relationship() const {
  return scale == KinshipScale::coefficient ? Eigen::MatrixXd(2.0 * values) : values;
}

KinshipMatrix kinship(const Pedigree& ped, KinshipScale scale) {
  const auto n = static_cast<Eigen::Index>(ped.size());
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(n, n);
  const auto& members = ped.members();
  const auto& topo = ped.topological_order();

  // Process in topological order; each new individual only needs kinships
  // with those already placed.
  for (std::size_t t = 0; t < topo.size(); ++t) {
    const auto i = static_cast<Eigen::Index>(topo[t]);
    const auto& m = members[topo[t]];
    if (m.is_founder()) {
      phi(i, i) = 0.5;
      continue;
    }
    const auto f = static_cast<Eigen::Index>(*ped.index_of(*m.father));
    const auto mo = static_cast<Eigen::Index>(*ped.index_of(*m.mother));
    for (std::size_t u = 0; u < t; ++u) {
      const auto j = static_cast<Eigen::Index>(topo[u]);
      if (members[topo[u]].family != m.family) continue;
      const double v = 0.5 * (phi(f, j) + phi(mo, j));
      phi(i, j) = v;
      phi(j, i) = v;
    }
    phi(i, i) = 0.5 + 0.5 * phi(f, mo);
  }

  KinshipMatrix out;
  out.order.reserve(members.size());
  for (const auto& m : members) out.order.push_back(m.id);
  out.values = scale == KinshipScale::relationship ? Eigen::MatrixXd(2.0 * phi) : phi;
  out.scale = scale;
  return out;
}

Eigen::MatrixXd cholesky(const Eigen::MatrixXd& k, double jitter) {
  if (k.rows() != k.cols()) throw Error("pedigree.not_square", "matrix is not square");
  if (jitter < 0) throw Error("pedigree.bad_jitter", "jitter must be non-negative");
  const auto n = k.rows();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = k(j, j) + jitter;
    for (Eigen::Index p = 0; p < j; ++p) d -= l(j, p) * l(j, p);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw Error("pedigree.not_positive_definite",
                  "matrix is not positive definite: leading minor " + std::to_string(j + 1) +
                      " fails");
    }
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double s = k(i, j);
      for (Eigen::Index p = 0; p < j; ++p) s -= l(i, p) * l(j, p);
      l(i, j) = s / ljj;
    }
  }
  return l;
}

Eigen::MatrixXd cholesky_with_fallback(const Eigen::MatrixXd& k, double* jitter_used) {
  for (double jitter : {0.0, 1e-8, 1e-6}) {
    try {
      auto l = cholesky(k, jitter);
      if (jitter_used) *jitter_used = jitter;
      return l;
    } catch (const Error& e) {
      if (e.code() != "pedigree.not_positive_definite" || jitter == 1e-6) throw;
    }
  }
  throw Error("pedigree.not_positive_definite", "unreachable");
}

Eigen::SparseMatrix<double, Eigen::RowMajor> sparse_lower(const Eigen::MatrixXd& lower) {
  return lower.sparseView(0.0, 0.0);
}

}  // namespace pedmr
