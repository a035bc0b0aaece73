#include "pedmr/data.hpp"

#include "pedmr/error.hpp"
#include "pedmr/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <unordered_map>

namespace pedmr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "na" || s == "NaN" || s == "." || s == "nan";
}

double parse_number(const std::string& s, const char* code, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(code, "cannot parse " + what + " value '" + s + "'");
  }
}

double parse_dose(const std::string& s, const std::string& variant, const std::string& id) {
  if (is_missing_token(s)) {
    throw Error("data.missing_genotype", "missing dose for variant '" + variant + "', id '" + id + "'");
  }
  if (s == "0" || s == "1" || s == "2") return static_cast<double>(s[0] - '0');
  const double v = parse_number(s, "data.bad_dose", "dose");
  if (v != 0.0 && v != 1.0 && v != 2.0) {
    throw Error("data.bad_dose", "dose " + s + " for variant '" + variant + "', id '" + id +
                                     "' is not in {0,1,2}");
  }
  return v;
}

struct VariantColumn {
  VariantInfo info;
  std::unordered_map<std::string, double> dose;
};

std::vector<VariantColumn> read_genotypes(std::istream& in) {
  const auto rows = io::read_rows(in);
  if (rows.empty()) throw Error("data.parse", "genotype file is empty");
  const auto& header = rows.front();
  if (header.size() < 4 || header[0] != "variant_id" || header[1] != "chrom" || header[2] != "pos") {
    throw Error("data.parse", "genotype header must start with variant_id, chrom, pos");
  }
  const bool long_format = header.size() == 5 && header[3] == "id" && header[4] == "dose";

  std::vector<VariantColumn> out;
  std::unordered_map<std::string, std::size_t> by_id;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw Error("data.parse", "genotype row " + std::to_string(r + 1) + " has " +
                                    std::to_string(row.size()) + " fields, expected " +
                                    std::to_string(header.size()));
    }
    auto [it, inserted] = by_id.emplace(row[0], out.size());
    if (inserted) {
      VariantColumn col;
      col.info.id = row[0];
      col.info.chrom = row[1];
      col.info.pos = static_cast<long long>(parse_number(row[2], "data.parse", "position"));
      out.push_back(std::move(col));
    } else if (!long_format) {
      throw Error("data.duplicate_variant", "variant '" + row[0] + "' appears twice");
    }
    auto& col = out[it->second];
    if (long_format) {
      col.dose[row[3]] = parse_dose(row[4], row[0], row[3]);
    } else {
      for (std::size_t c = 3; c < row.size(); ++c) col.dose[header[c]] = parse_dose(row[c], row[0], header[c]);
    }
  }
  return out;
}

struct PhenoRow {
  double y;
  std::optional<double> x;
  Sex sex = Sex::unknown;
};

std::unordered_map<std::string, PhenoRow> read_phenotypes(std::istream& in) {
  const auto rows = io::read_rows(in);
  if (rows.empty()) throw Error("data.parse", "phenotype file is empty");
  std::size_t start = 0;
  std::size_t col_y = 1, col_x = 2;
  std::optional<std::size_t> col_sex;
  if (rows.front().size() >= 3 && rows.front()[0] == "id") {
    start = 1;
    const auto& h = rows.front();
    for (std::size_t c = 1; c < h.size(); ++c) {
      if (h[c] == "Y" || h[c] == "y") col_y = c;
      else if (h[c] == "X" || h[c] == "x") col_x = c;
      else if (h[c] == "sex") col_sex = c;
    }
  } else if (rows.front().size() >= 4) {
    col_sex = 3;
  }

  std::unordered_map<std::string, PhenoRow> out;
  for (std::size_t r = start; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() < 3) {
      throw Error("data.parse", "phenotype row " + std::to_string(r + 1) + " has fewer than 3 fields");
    }
    const auto& id = row[0];
    PhenoRow p;
    const auto& ys = col_y < row.size() ? row[col_y] : std::string();
    if (is_missing_token(ys)) throw Error("data.missing_outcome", "missing outcome for id '" + id + "'");
    p.y = parse_number(ys, "data.bad_outcome", "outcome");
    if (p.y != 0.0 && p.y != 1.0) throw Error("data.bad_outcome", "outcome for id '" + id + "' is not 0/1");
    const auto& xs = col_x < row.size() ? row[col_x] : std::string();
    if (!is_missing_token(xs)) p.x = parse_number(xs, "data.bad_exposure", "exposure");
    if (col_sex && *col_sex < row.size()) {
      const auto& s = row[*col_sex];
      p.sex = s == "1" ? Sex::male : s == "2" ? Sex::female : Sex::unknown;
    }
    if (!out.emplace(id, std::move(p)).second) {
      throw Error("data.duplicate_id", "phenotype id '" + id + "' appears twice");
    }
  }
  return out;
}

}  // namespace

std::size_t Dataset::n_missing() const {
  return static_cast<std::size_t>(std::count(x_missing.begin(), x_missing.end(), true));
}

Dataset Dataset::select_variants(const std::vector<std::string>& variant_ids) const {
  std::unordered_map<std::string, Eigen::Index> pos;
  for (std::size_t j = 0; j < variants.size(); ++j) pos.emplace(variants[j].id, static_cast<Eigen::Index>(j));
  Dataset out = *this;
  out.variants.clear();
  out.z.resize(z.rows(), static_cast<Eigen::Index>(variant_ids.size()));
  for (std::size_t k = 0; k < variant_ids.size(); ++k) {
    auto it = pos.find(variant_ids[k]);
    if (it == pos.end()) throw Error("data.unknown_variant", "variant '" + variant_ids[k] + "' not in dataset");
    out.variants.push_back(variants[static_cast<std::size_t>(it->second)]);
    out.z.col(static_cast<Eigen::Index>(k)) = z.col(it->second);
  }
  return out;
}

Dataset Dataset::select_rows(const std::vector<bool>& keep) const {
  Dataset out;
  out.variants = variants;
  out.x_center = x_center;
  out.x_scale = x_scale;
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < keep.size(); ++i)
    if (keep[i]) rows.push_back(static_cast<Eigen::Index>(i));
  const auto n = static_cast<Eigen::Index>(rows.size());
  out.z.resize(n, z.cols());
  out.x.resize(n);
  out.y.resize(n);
  if (sex) out.sex = Eigen::VectorXd(n);
  std::map<int, int> remap;
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto i = rows[static_cast<std::size_t>(r)];
    out.ids.push_back(ids[static_cast<std::size_t>(i)]);
    out.z.row(r) = z.row(i);
    out.x(r) = x(i);
    out.y(r) = y(i);
    out.x_missing.push_back(x_missing[static_cast<std::size_t>(i)]);
    if (sex) (*out.sex)(r) = (*sex)(i);
    const int f = family[static_cast<std::size_t>(i)];
    auto [it, inserted] = remap.emplace(f, static_cast<int>(out.family_labels.size()));
    if (inserted) out.family_labels.push_back(family_labels[static_cast<std::size_t>(f)]);
    out.family.push_back(it->second);
  }
  return out;
}

Eigen::VectorXd Dataset::raw_exposure() const { return (x.array() * x_scale + x_center).matrix(); }

Dataset load_dataset(std::istream& genotypes, std::istream& phenotypes, const Pedigree& ped) {
  const auto geno = read_genotypes(genotypes);
  const auto pheno = read_phenotypes(phenotypes);

  for (const auto& [id, row] : pheno) {
    if (!ped.index_of(id)) throw Error("data.id_mismatch", "phenotype id '" + id + "' not in pedigree");
  }
  for (const auto& col : geno) {
    for (const auto& [id, d] : col.dose) {
      if (!ped.index_of(id)) throw Error("data.id_mismatch", "genotype id '" + id + "' not in pedigree");
    }
  }

  Dataset ds;
  const auto& members = ped.members();
  std::vector<const Member*> kept;
  for (const auto& m : members) {
    if (pheno.count(m.id)) kept.push_back(&m);
  }
  const auto n = static_cast<Eigen::Index>(kept.size());
  const auto j_count = static_cast<Eigen::Index>(geno.size());
  ds.z.resize(n, j_count);
  ds.x.resize(n);
  ds.y.resize(n);
  Eigen::VectorXd sex(n);
  bool sex_complete = true;
  std::unordered_map<std::string, int> fam_index;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& m = *kept[static_cast<std::size_t>(i)];
    const auto& p = pheno.at(m.id);
    ds.ids.push_back(m.id);
    auto [it, inserted] = fam_index.emplace(m.family, static_cast<int>(ds.family_labels.size()));
    if (inserted) ds.family_labels.push_back(m.family);
    ds.family.push_back(it->second);
    ds.y(i) = p.y;
    ds.x(i) = p.x ? *p.x : kNaN;
    ds.x_missing.push_back(!p.x.has_value());
    const Sex s = p.sex != Sex::unknown ? p.sex : m.sex;
    if (s == Sex::unknown) sex_complete = false;
    sex(i) = s == Sex::female ? 1.0 : 0.0;
    for (Eigen::Index j = 0; j < j_count; ++j) {
      const auto& col = geno[static_cast<std::size_t>(j)];
      auto d = col.dose.find(m.id);
      if (d == col.dose.end()) {
        throw Error("data.id_mismatch", "individual '" + m.id + "' has no genotype for variant '" +
                                            col.info.id + "'");
      }
      ds.z(i, j) = d->second;
    }
  }
  for (const auto& col : geno) ds.variants.push_back(col.info);
  if (sex_complete && n > 0) ds.sex = sex;
  return ds;
}

Dataset standardize_exposure(Dataset ds) {
  double sum = 0.0;
  std::size_t count = 0;
  for (Eigen::Index i = 0; i < ds.x.size(); ++i) {
    if (ds.x_missing[static_cast<std::size_t>(i)]) continue;
    sum += ds.x(i);
    ++count;
  }
  if (count == 0) throw Error("data.all_missing", "every exposure value is missing");
  if (count < 2) throw Error("data.zero_variance", "need at least two observed exposure values");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (Eigen::Index i = 0; i < ds.x.size(); ++i) {
    if (ds.x_missing[static_cast<std::size_t>(i)]) continue;
    ss += (ds.x(i) - mean) * (ds.x(i) - mean);
  }
  const double sd = std::sqrt(ss / static_cast<double>(count - 1));
  if (!(sd > 0.0)) throw Error("data.zero_variance", "observed exposure has zero variance");
  for (Eigen::Index i = 0; i < ds.x.size(); ++i) {
    if (ds.x_missing[static_cast<std::size_t>(i)]) continue;
    ds.x(i) = (ds.x(i) - mean) / sd;
  }
  ds.x_center += mean * ds.x_scale;
  ds.x_scale *= sd;
  return ds;
}

Dataset mask_exposure_in_cases(Dataset ds) {
  for (Eigen::Index i = 0; i < ds.y.size(); ++i) {
    if (ds.y(i) == 1.0) {
      ds.x_missing[static_cast<std::size_t>(i)] = true;
      ds.x(i) = kNaN;
    }
  }
  return ds;
}

void write_genotypes(std::ostream& out, const Dataset& ds) {
  out << "variant_id\tchrom\tpos";
  for (const auto& id : ds.ids) out << '\t' << id;
  out << '\n';
  for (std::size_t j = 0; j < ds.variants.size(); ++j) {
    const auto& v = ds.variants[j];
    out << v.id << '\t' << v.chrom << '\t' << v.pos;
    for (Eigen::Index i = 0; i < ds.z.rows(); ++i) {
      out << '\t' << static_cast<int>(ds.z(i, static_cast<Eigen::Index>(j)));
    }
    out << '\n';
  }
}

void write_phenotypes(std::ostream& out, const Dataset& ds) {
  out << "id,Y,X,sex\n";
  const auto raw = ds.raw_exposure();
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    out << ds.ids[i] << ',' << static_cast<int>(ds.y(r)) << ',';
    if (!ds.x_missing[i]) out << io::format_double(raw(r));
    out << ',';
    if (ds.sex) out << ((*ds.sex)(r) == 1.0 ? 2 : 1);
    else out << 0;
    out << '\n';
  }
}

void write_pedigree(std::ostream& out, const Pedigree& ped) {
  for (const auto& m : ped.members()) {
    out << m.family << '\t' << m.id << '\t' << m.father.value_or("0") << '\t'
        << m.mother.value_or("0") << '\t' << static_cast<int>(m.sex) << '\n';
  }
}

}  // namespace pedmr
