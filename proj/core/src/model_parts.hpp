#pragma once

#include <memory>

#include "mislstm/model.hpp"

namespace mislstm::detail {

template <class T>
std::unique_ptr<DayModel<T>> make_lstm_baseline(const ModelConfig& config, Rng& rng);
template <class T>
std::unique_ptr<DayModel<T>> make_cnn1d_baseline(const ModelConfig& config, Rng& rng);
template <class T>
std::unique_ptr<DayModel<T>> make_cnn2d_baseline(const ModelConfig& config, Rng& rng);

}  // namespace mislstm::detail
