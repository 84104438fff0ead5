#include "cdu/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <string>

#include "cdu/error.hpp"
#include "cdu/rng.hpp"

namespace cdu {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
bool parse_int(std::string_view field, T& out) {
  if (field.empty()) return false;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
  return ec == std::errc{} && ptr == field.data() + field.size();
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

void fnv_mix(std::uint64_t& h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFFU;
    h *= 0x100000001B3ULL;
  }
}

std::vector<std::uint32_t> dense_remap(std::vector<std::uint64_t>& raw, std::vector<std::uint64_t>& unique_out) {
  unique_out = raw;
  std::sort(unique_out.begin(), unique_out.end());
  unique_out.erase(std::unique(unique_out.begin(), unique_out.end()), unique_out.end());
  std::vector<std::uint32_t> dense(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    dense[i] = static_cast<std::uint32_t>(std::lower_bound(unique_out.begin(), unique_out.end(), raw[i]) -
                                          unique_out.begin());
  }
  return dense;
}

}  // namespace

QMatrix::QMatrix(const std::vector<std::vector<int>>& rows) {
  if (rows.empty()) throw ValidationError("Q-matrix has no rows");
  kcs_ = rows.front().size();
  if (kcs_ == 0) throw ValidationError("Q-matrix has no columns");
  items_ = rows.size();
  entries_.reserve(items_ * kcs_);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (rows[j].size() != kcs_) {
      throw ValidationError("Q-matrix row " + std::to_string(j) + " has " + std::to_string(rows[j].size()) +
                            " entries, expected " + std::to_string(kcs_));
    }
    bool any = false;
    for (int v : rows[j]) {
      if (v != 0 && v != 1) throw ValidationError("Q-matrix row " + std::to_string(j) + " has a non-binary entry");
      any = any || v == 1;
      entries_.push_back(static_cast<std::uint8_t>(v));
    }
    if (!any) throw ValidationError("Q-matrix row " + std::to_string(j) + " is all zeros");
  }
}

std::uint64_t Dataset::key() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  fnv_mix(h, n_students);
  fnv_mix(h, n_items);
  fnv_mix(h, records.size());
  for (const auto& r : records) {
    fnv_mix(h, (static_cast<std::uint64_t>(r.student) << 32) | r.item);
    fnv_mix(h, r.score);
  }
  return h;
}

ResponseRecord parse_response_row(std::string_view line, std::size_t line_number) {
  const auto fields = split_fields(line);
  if (fields.size() != 3) {
    throw ParseError("expected 3 fields, got " + std::to_string(fields.size()), line_number);
  }
  std::uint32_t student = 0;
  std::uint32_t item = 0;
  int score = 0;
  if (!parse_int(fields[0], student)) throw ParseError("bad student_id '" + std::string(fields[0]) + "'", line_number);
  if (!parse_int(fields[1], item)) throw ParseError("bad item_id '" + std::string(fields[1]) + "'", line_number);
  if (!parse_int(fields[2], score)) throw ParseError("bad score '" + std::string(fields[2]) + "'", line_number);
  if (score != 0 && score != 1) {
    throw ValidationError("line " + std::to_string(line_number) + ": score " + std::to_string(score) +
                          " is not 0 or 1");
  }
  return {student, item, static_cast<std::uint8_t>(score)};
}

Dataset load_responses(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::string line;
  std::size_t line_number = 0;
  if (!std::getline(in, line)) throw ParseError("empty file " + path.string(), 1);
  ++line_number;
  const auto header = split_fields(line);
  if (header.size() != 3 || header[0] != "student_id" || header[1] != "item_id" || header[2] != "score") {
    throw ParseError("header must be 'student_id,item_id,score'", 1);
  }
  std::vector<std::uint64_t> raw_students;
  std::vector<std::uint64_t> raw_items;
  std::vector<std::uint8_t> scores;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    const ResponseRecord r = parse_response_row(line, line_number);
    raw_students.push_back(r.student);
    raw_items.push_back(r.item);
    scores.push_back(r.score);
  }
  if (scores.empty()) throw ValidationError(path.string() + " has no records");

  Dataset ds;
  const auto students = dense_remap(raw_students, ds.student_ids);
  const auto items = dense_remap(raw_items, ds.item_ids);
  ds.n_students = ds.student_ids.size();
  ds.n_items = ds.item_ids.size();
  ds.records.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) ds.records[i] = {students[i], items[i], scores[i]};
  return ds;
}

QMatrix load_qmatrix(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  std::vector<std::vector<int>> rows;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (trim(line).empty()) continue;
    std::vector<int> row;
    for (auto field : split_fields(line)) {
      int v = 0;
      if (!parse_int(field, v)) throw ParseError("bad Q-matrix entry '" + std::string(field) + "'", line_number);
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  return QMatrix(rows);
}

void attach_qmatrix(Dataset& dataset, QMatrix q) {
  if (q.items() != dataset.n_items) {
    throw ValidationError("Q-matrix has " + std::to_string(q.items()) + " rows but the responses reference " +
                          std::to_string(dataset.n_items) + " items");
  }
  dataset.qmatrix = std::move(q);
}

Dataset load_dataset(const std::filesystem::path& responses, const std::filesystem::path& qmatrix) {
  Dataset ds = load_responses(responses);
  attach_qmatrix(ds, load_qmatrix(qmatrix));
  return ds;
}

Dataset make_dataset(std::vector<ResponseRecord> records, std::size_t n_students, QMatrix q) {
  Dataset ds;
  ds.n_students = n_students;
  ds.n_items = q.items();
  std::vector<bool> seen(n_students, false);
  for (const auto& r : records) {
    if (r.student >= n_students || r.item >= ds.n_items || r.score > 1) {
      throw ValidationError("record out of range for make_dataset");
    }
    seen[r.student] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
    throw ValidationError("every student must have at least one record");
  }
  ds.records = std::move(records);
  ds.qmatrix = std::move(q);
  ds.student_ids.resize(n_students);
  for (std::size_t i = 0; i < n_students; ++i) ds.student_ids[i] = i;
  ds.item_ids.resize(ds.n_items);
  for (std::size_t j = 0; j < ds.n_items; ++j) ds.item_ids[j] = j;
  return ds;
}

void write_responses(const std::filesystem::path& path, std::span<const ResponseRecord> records) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "student_id,item_id,score\n";
  for (const auto& r : records) out << r.student << ',' << r.item << ',' << int{r.score} << '\n';
}

void write_qmatrix(const std::filesystem::path& path, const QMatrix& q) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (std::size_t j = 0; j < q.items(); ++j) {
    for (std::size_t k = 0; k < q.kcs(); ++k) out << (k ? "," : "") << int{q.at(j, k)};
    out << '\n';
  }
}

RecordSplit split_records(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed) {
  if (dataset.records.empty()) throw ValidationError("cannot split an empty dataset");
  if (!(ratios.train > 0 && ratios.valid > 0 && ratios.test > 0)) {
    throw ValidationError("split ratios must be positive");
  }
  if (std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must sum to 1");
  }
  const std::size_t n = dataset.records.size();
  // The epsilon keeps exact products such as 0.2 * 10 from flooring to 1.
  const auto cut = [n](double r) { return static_cast<std::size_t>(std::floor(static_cast<double>(n) * r + 1e-9)); };
  const std::size_t n_valid = cut(ratios.valid);
  const std::size_t n_test = cut(ratios.test);
  const std::size_t n_train = n - n_valid - n_test;

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span(order));

  RecordSplit split;
  split.dataset_key = dataset.key();
  split.train.reserve(n_train);
  split.valid.reserve(n_valid);
  split.test.reserve(n_test);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = dataset.records[order[i]];
    if (i < n_train) {
      split.train.push_back(r);
    } else if (i < n_train + n_valid) {
      split.valid.push_back(r);
    } else {
      split.test.push_back(r);
    }
  }
  return split;
}

const std::vector<std::uint32_t>& StudentPartition::members(StudentGroup g) const {
  switch (g) {
    case StudentGroup::forget: return forget;
    case StudentGroup::nm_train: return nm_train;
    case StudentGroup::nm_eval: return nm_eval;
    case StudentGroup::retain: break;
  }
  return retain;
}

StudentPartition partition_students(const Dataset& dataset, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0) || ratio > 1.0 / 3.0 + 1e-12) {
    throw ValidationError("unlearning ratio must lie in (0, 1/3], got " + std::to_string(ratio));
  }
  const std::size_t n = dataset.n_students;
  const auto m = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));

  std::vector<std::uint32_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<std::uint32_t>(i);
  Rng rng(seed);
  rng.shuffle(std::span(order));

  StudentPartition part;
  part.ratio = ratio;
  part.dataset_key = dataset.key();
  part.group_of.assign(n, StudentGroup::retain);
  for (std::size_t i = 0; i < n; ++i) {
    StudentGroup g = StudentGroup::retain;
    if (i < m) {
      g = StudentGroup::forget;
    } else if (i < 2 * m) {
      g = StudentGroup::nm_train;
    } else if (i < 3 * m) {
      g = StudentGroup::nm_eval;
    }
    part.group_of[order[i]] = g;
  }
  for (std::uint32_t s = 0; s < n; ++s) {
    switch (part.group_of[s]) {
      case StudentGroup::forget: part.forget.push_back(s); break;
      case StudentGroup::nm_train: part.nm_train.push_back(s); break;
      case StudentGroup::nm_eval: part.nm_eval.push_back(s); break;
      case StudentGroup::retain: part.retain.push_back(s); break;
    }
  }
  return part;
}

std::vector<ResponseRecord> GroupRecords::train_valid() const {
  std::vector<ResponseRecord> out;
  out.reserve(train.size() + valid.size());
  out.insert(out.end(), train.begin(), train.end());
  out.insert(out.end(), valid.begin(), valid.end());
  return out;
}

MiaSplits derive_mia_subsets(const StudentPartition& partition, const RecordSplit& split) {
  if (partition.dataset_key != split.dataset_key) {
    throw ValidationError("student partition and record split come from different datasets");
  }
  MiaSplits out;
  const auto route = [&](const std::vector<ResponseRecord>& records, auto member) {
    for (const auto& r : records) {
      if (r.student >= partition.group_of.size()) throw ValidationError("record student outside the partition");
      auto& g = out.groups[static_cast<std::size_t>(partition.group_of[r.student])];
      (g.*member).push_back(r);
    }
  };
  route(split.train, &GroupRecords::train);
  route(split.valid, &GroupRecords::valid);
  route(split.test, &GroupRecords::test);
  return out;
}

}  // namespace cdu
