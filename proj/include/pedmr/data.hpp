#pragma once

#include "pedmr/pedigree.hpp"

#include <Eigen/Dense>

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pedmr {

struct VariantInfo {
  std::string id;
  std::string chrom;
  long long pos = 0;
};

// Analysis dataset, rows in pedigree order. Missing exposure entries hold NaN
// in `x` and are flagged in `x_missing`.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<std::string> family_labels;
  std::vector<int> family;  // 0-based index into family_labels
  std::vector<VariantInfo> variants;
  Eigen::MatrixXd z;  // N x J allele doses
  Eigen::VectorXd x;
  std::vector<bool> x_missing;
  Eigen::VectorXd y;                 // 0/1
  std::optional<Eigen::VectorXd> sex;  // 0 = male, 1 = female; absent if any unknown

  // Original exposure = x * x_scale + x_center.
  double x_center = 0.0;
  double x_scale = 1.0;

  std::size_t size() const { return ids.size(); }
  std::size_t n_variants() const { return variants.size(); }
  std::size_t n_families() const { return family_labels.size(); }
  std::size_t n_missing() const;

  // Column subset in the given id order. Throws on unknown ids.
  Dataset select_variants(const std::vector<std::string>& variant_ids) const;

  // Row subset (keeps only rows where keep[i]). Family labels are compacted.
  Dataset select_rows(const std::vector<bool>& keep) const;

  // Exposure on the original measurement scale; NaN where missing.
  Eigen::VectorXd raw_exposure() const;
};

// Genotype file, either wide
//   variant_id chrom pos <id1> <id2> ...
// or long
//   variant_id chrom pos id dose
// Phenotype file: id, Y, X (empty or NA = missing), optional sex (1/2/0).
Dataset load_dataset(std::istream& genotypes, std::istream& phenotypes, const Pedigree& ped);

// Rescales observed entries to sample mean 0, sd 1 (n - 1 denominator);
// composes the scaling constants so raw_exposure() still recovers the input.
Dataset standardize_exposure(Dataset ds);

// Flags every exposure with Y = 1 as missing.
Dataset mask_exposure_in_cases(Dataset ds);

void write_genotypes(std::ostream& out, const Dataset& ds);
void write_phenotypes(std::ostream& out, const Dataset& ds);
void write_pedigree(std::ostream& out, const Pedigree& ped);

}  // namespace pedmr
