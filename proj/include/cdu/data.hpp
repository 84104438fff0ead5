#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace cdu {

/// One student-item-score triplet. Ids are dense 0-based indices once a
/// record belongs to a Dataset.
struct ResponseRecord {
  std::uint32_t student = 0;
  std::uint32_t item = 0;
  std::uint8_t score = 0;

  friend bool operator==(const ResponseRecord&, const ResponseRecord&) = default;
};

/// Binary items x knowledge-components matrix. Every row has at least one 1.
class QMatrix {
 public:
  QMatrix() = default;
  /// Throws ValidationError on a ragged, non-binary, or all-zero-row input.
  explicit QMatrix(const std::vector<std::vector<int>>& rows);

  std::size_t items() const noexcept { return items_; }
  std::size_t kcs() const noexcept { return kcs_; }
  bool empty() const noexcept { return items_ == 0; }

  std::uint8_t at(std::size_t item, std::size_t kc) const { return entries_[item * kcs_ + kc]; }
  std::span<const std::uint8_t> row(std::size_t item) const {
    return {entries_.data() + item * kcs_, kcs_};
  }

  friend bool operator==(const QMatrix&, const QMatrix&) = default;

 private:
  std::size_t items_ = 0;
  std::size_t kcs_ = 0;
  std::vector<std::uint8_t> entries_;
};

/// Response log with dense ids. `student_ids[i]` / `item_ids[j]` hold the
/// original ids found in the file for dense index i / j.
struct Dataset {
  std::vector<ResponseRecord> records;
  std::size_t n_students = 0;
  std::size_t n_items = 0;
  QMatrix qmatrix;
  std::vector<std::uint64_t> student_ids;
  std::vector<std::uint64_t> item_ids;

  /// Fingerprint of the record list; used to reject splits/partitions that
  /// were computed on another dataset.
  std::uint64_t key() const;
};

/// Parses a `student_id,item_id,score` row. Ids are kept as written.
ResponseRecord parse_response_row(std::string_view line, std::size_t line_number);

/// Reads a `student_id,item_id,score` CSV with header. Student and item ids are
/// remapped to dense indices in ascending order of the original id; record
/// order is preserved. The returned dataset has no Q-matrix attached.
Dataset load_responses(const std::filesystem::path& path);

/// Reads J rows of K comma-separated 0/1 values (no header).
QMatrix load_qmatrix(const std::filesystem::path& path);

/// Attaches `q`; dense item index j maps to Q-matrix row j.
void attach_qmatrix(Dataset& dataset, QMatrix q);

/// load_responses + load_qmatrix + attach_qmatrix.
Dataset load_dataset(const std::filesystem::path& responses, const std::filesystem::path& qmatrix);

/// Builds a dataset from records whose ids are already dense.
Dataset make_dataset(std::vector<ResponseRecord> records, std::size_t n_students, QMatrix q);

void write_responses(const std::filesystem::path& path, std::span<const ResponseRecord> records);
void write_qmatrix(const std::filesystem::path& path, const QMatrix& q);

struct SplitRatios {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
};

struct RecordSplit {
  std::vector<ResponseRecord> train;
  std::vector<ResponseRecord> valid;
  std::vector<ResponseRecord> test;
  std::uint64_t dataset_key = 0;
};

/// Shuffles records with `seed` and cuts them by `ratios`. Valid and test get
/// floor(n * ratio); the remainder goes to train.
RecordSplit split_records(const Dataset& dataset, const SplitRatios& ratios, std::uint64_t seed);

enum class StudentGroup : std::uint8_t { forget = 0, nm_train = 1, nm_eval = 2, retain = 3 };
inline constexpr std::size_t kStudentGroupCount = 4;

struct StudentPartition {
  std::vector<std::uint32_t> forget;
  std::vector<std::uint32_t> nm_train;
  std::vector<std::uint32_t> nm_eval;
  std::vector<std::uint32_t> retain;
  double ratio = 0.0;
  /// group_of[s] is the group of dense student s.
  std::vector<StudentGroup> group_of;
  std::uint64_t dataset_key = 0;

  const std::vector<std::uint32_t>& members(StudentGroup g) const;
};

/// Three equal random draws of floor(ratio * n_students) students (forget,
/// non-member train, non-member eval); everyone else is retained. Id lists are
/// sorted ascending. Requires 0 < ratio <= 1/3.
StudentPartition partition_students(const Dataset& dataset, double ratio, std::uint64_t seed);

struct GroupRecords {
  std::vector<ResponseRecord> train;
  std::vector<ResponseRecord> valid;
  std::vector<ResponseRecord> test;

  /// train followed by valid.
  std::vector<ResponseRecord> train_valid() const;
};

/// Record split crossed with the student partition.
struct MiaSplits {
  std::array<GroupRecords, kStudentGroupCount> groups;

  const GroupRecords& operator[](StudentGroup g) const { return groups[static_cast<std::size_t>(g)]; }

  /// D_f: forget students' train and valid records.
  std::vector<ResponseRecord> forget_set() const { return (*this)[StudentGroup::forget].train_valid(); }
  /// D_r: retained students' train and valid records.
  std::vector<ResponseRecord> retain_set() const { return (*this)[StudentGroup::retain].train_valid(); }
  const std::vector<ResponseRecord>& forget_test() const { return (*this)[StudentGroup::forget].test; }
  const std::vector<ResponseRecord>& nm_train_test() const { return (*this)[StudentGroup::nm_train].test; }
  const std::vector<ResponseRecord>& nm_eval_test() const { return (*this)[StudentGroup::nm_eval].test; }
  const std::vector<ResponseRecord>& retain_test() const { return (*this)[StudentGroup::retain].test; }
};

MiaSplits derive_mia_subsets(const StudentPartition& partition, const RecordSplit& split);

}  // namespace cdu
