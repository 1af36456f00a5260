#include "selfaug/data/batch.hpp"

#include "selfaug/errors.hpp"
#include "selfaug/random.hpp"

#include <algorithm>
#include <fmt/format.h>
#include <numeric>

namespace selfaug {

EncodedDataset encode_dataset(const std::vector<Example>& examples, const Vocabulary& vocab,
                              const LabelSpace& labels, std::size_t max_seq_len) {
    EncodedDataset out{labels, {}};
    out.items.reserve(examples.size());
    for (const auto& ex : examples) {
        EncodedText enc = encode(ex.text, vocab, max_seq_len);
        const auto real = static_cast<std::size_t>(std::count(enc.mask.begin(), enc.mask.end(), 1));
        enc.ids.resize(real);
        out.items.push_back({ex.id, std::move(enc.ids), labels.indices_of(ex)});
    }
    return out;
}

Batch collate(const EncodedDataset& data, const std::vector<std::size_t>& rows) {
    Batch b;
    b.batch = rows.size();
    b.rows = rows;
    for (auto r : rows) b.seq = std::max(b.seq, data.items.at(r).ids.size());
    b.token_ids.assign(b.batch * b.seq, Vocabulary::kPad);
    b.mask = Tensor({b.batch, b.seq});
    const bool multilabel = data.labels.multilabel();
    if (multilabel) b.multilabel_targets = Tensor({b.batch, data.labels.size()});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& item = data.items[rows[i]];
        for (std::size_t t = 0; t < item.ids.size(); ++t) {
            b.token_ids[i * b.seq + t] = item.ids[t];
            b.mask[i * b.seq + t] = 1.0;
        }
        if (multilabel) {
            for (int l : item.targets) b.multilabel_targets[i * data.labels.size() + static_cast<std::size_t>(l)] = 1.0;
        } else {
            b.class_targets.push_back(item.targets.front());
        }
    }
    return b;
}

std::vector<std::vector<std::size_t>> batch_plan(std::size_t n, std::size_t batch_size,
                                                 std::optional<std::uint64_t> shuffle_seed, BatchMode mode) {
    if (batch_size == 0) throw ConfigError("batch size must be positive");
    if (mode == BatchMode::train && batch_size < 2) {
        throw ConfigError("training batch size must be at least 2 (batch statistics)");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (shuffle_seed) deterministic_shuffle(order, *shuffle_seed);
    std::vector<std::vector<std::size_t>> plan;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        if (mode == BatchMode::train && end - start < batch_size) break;
        plan.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                          order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return plan;
}

BatchIterator::BatchIterator(const EncodedDataset& data, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed, BatchMode mode)
    : data_(&data), plan_(batch_plan(data.size(), batch_size, shuffle_seed, mode)) {}

std::optional<Batch> BatchIterator::next() {
    if (cursor_ >= plan_.size()) return std::nullopt;
    return collate(*data_, plan_[cursor_++]);
}

BatchIterator batches(const EncodedDataset& data, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed,
                      BatchMode mode) {
    return BatchIterator(data, batch_size, shuffle_seed, mode);
}

} // namespace selfaug
