#include "selfaug/train/early_stopping.hpp"

#include "selfaug/errors.hpp"

namespace selfaug {

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
    if (patience == 0) throw ConfigError("patience must be at least 1");
}

bool EarlyStopping::update(double score) {
    ++seen_;
    if (best_epoch_ == 0 || score > best_) {
        best_ = score;
        best_epoch_ = seen_;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

StopReplay replay_early_stopping(std::span<const double> scores, std::size_t patience, std::size_t max_epochs) {
    EarlyStopping rule(patience);
    StopReplay out;
    for (double s : scores) {
        if (out.epochs_run == max_epochs) break;
        rule.update(s);
        ++out.epochs_run;
        if (rule.should_stop()) {
            out.stopped_early = out.epochs_run < max_epochs;
            break;
        }
    }
    out.best_epoch = rule.best_epoch();
    return out;
}

} // namespace selfaug
