#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <iosfwd>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace pedmr {

enum class Sex { unknown = 0, male = 1, female = 2 };

struct Member {
  std::string id;
  std::string family;
  std::optional<std::string> father;
  std::optional<std::string> mother;
  Sex sex = Sex::unknown;

  bool is_founder() const { return !father.has_value(); }
};

// A validated set of pedigree members. Construction checks that ids are
// unique, parents are either both given or both absent, parents exist in the
// same family, and that no individual is its own ancestor.
class Pedigree {
 public:
  Pedigree() = default;
  explicit Pedigree(std::vector<Member> members);

  const std::vector<Member>& members() const { return members_; }
  std::size_t size() const { return members_.size(); }

  // Index of `id` in members(), or nullopt.
  std::optional<std::size_t> index_of(const std::string& id) const;

  // Distinct family labels in order of first appearance.
  const std::vector<std::string>& families() const { return families_; }

  // Member indices with every parent before its children. Stable with respect
  // to file order among individuals whose parents are already placed.
  const std::vector<std::size_t>& topological_order() const { return topo_; }

 private:
  std::vector<Member> members_;
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::string> families_;
  std::vector<std::size_t> topo_;
};

// Columns: family, id, father, mother, sex ("0" = missing parent; sex 1/2/0).
// Whitespace or comma delimited; extra columns are ignored.
Pedigree parse_pedigree(std::istream& in);

enum class KinshipScale {
  coefficient,   // self-kinship of a non-inbred individual is 0.5
  relationship,  // twice the coefficient (numerator relationship matrix)
};

struct KinshipMatrix {
  std::vector<std::string> order;
  Eigen::MatrixXd values;
  KinshipScale scale = KinshipScale::coefficient;

  // Genetic relationship matrix (twice the kinship coefficients).
  Eigen::MatrixXd relationship() const;

  // Sub-matrix over `ids`, in that order. Throws on unknown ids.
  KinshipMatrix subset(const std::vector<std::string>& ids) const;
};

KinshipMatrix kinship(const Pedigree& ped, KinshipScale scale = KinshipScale::coefficient);

// Lower-triangular L with L Lᵀ = K + jitter·I. Throws
// Error("pedigree.not_positive_definite") naming the failing leading minor.
Eigen::MatrixXd cholesky(const Eigen::MatrixXd& k, double jitter);

// Factorizes with no jitter; on failure retries at 1e-8 and then 1e-6.
Eigen::MatrixXd cholesky_with_fallback(const Eigen::MatrixXd& k, double* jitter_used = nullptr);

// Drops the exact zeros of a lower factor; cross-family blocks of a kinship
// factor are exactly zero so products cost O(sum of family sizes squared).
Eigen::SparseMatrix<double, Eigen::RowMajor> sparse_lower(const Eigen::MatrixXd& lower);

}  // namespace pedmr
