#pragma once

#include <cstddef>
#include <span>

namespace selfaug {

// Stops after `patience` consecutive epochs without a strictly higher score.
// Epochs are numbered from 1; ties keep the earlier best epoch.
class EarlyStopping {
public:
    explicit EarlyStopping(std::size_t patience);

    // Records the score of the next epoch; true when it is a new best.
    bool update(double score);
    bool should_stop() const { return since_best_ >= patience_; }

    std::size_t epochs_seen() const { return seen_; }
    std::size_t best_epoch() const { return best_epoch_; }
    double best_score() const { return best_; }

private:
    std::size_t patience_;
    std::size_t seen_ = 0;
    std::size_t best_epoch_ = 0;
    std::size_t since_best_ = 0;
    double best_ = 0.0;
};

struct StopReplay {
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    bool stopped_early = false;
};

// Feeds per-epoch scores through the rule, bounded by max_epochs.
StopReplay replay_early_stopping(std::span<const double> scores, std::size_t patience, std::size_t max_epochs);

} // namespace selfaug
