#pragma once

#include "selfaug/data/label_space.hpp"
#include "selfaug/data/vocab.hpp"
#include "selfaug/tensor/tensor.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace selfaug {

struct EncodedExample {
    std::string id;
    std::vector<std::int32_t> ids; // CLS + tokens, unpadded, length <= max_seq_len
    std::vector<int> targets;      // gold label indices
};

struct EncodedDataset {
    LabelSpace labels;
    std::vector<EncodedExample> items;

    std::size_t size() const { return items.size(); }
    bool empty() const { return items.empty(); }
};

EncodedDataset encode_dataset(const std::vector<Example>& examples, const Vocabulary& vocab,
                              const LabelSpace& labels, std::size_t max_seq_len);

// Padded to the longest sequence in the batch.
struct Batch {
    std::size_t batch = 0;
    std::size_t seq = 0;
    std::vector<std::int32_t> token_ids; // [batch, seq]
    Tensor mask;                         // [batch, seq] of 0/1
    std::vector<int> class_targets;      // single-label tasks
    Tensor multilabel_targets;           // [batch, labels] of 0/1, multilabel tasks
    std::vector<std::size_t> rows;       // dataset index of each row
};

enum class BatchMode { train, eval };

Batch collate(const EncodedDataset& data, const std::vector<std::size_t>& rows);

// Row indices per batch. Train mode shuffles under `shuffle_seed` and drops the
// final partial batch; eval mode keeps dataset order unless a seed is given and
// keeps the partial batch.
std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size,
                                                 std::optional<std::uint64_t> shuffle_seed, BatchMode mode);

// Walks a batch plan, collating lazily.
class BatchIterator {
public:
    BatchIterator(const EncodedDataset& data, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed,
                  BatchMode mode);

    std::size_t count() const { return plan_.size(); }
    std::optional<Batch> next();

private:
    const EncodedDataset* data_;
    std::vector<std::vector<std::size_t>> plan_;
    std::size_t cursor_ = 0;
};

BatchIterator batches(const EncodedDataset& data, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed,
                      BatchMode mode);

} // namespace selfaug
