#pragma once

#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

namespace svg::pipeline {

template <typename In, typename Out>
std::vector<Out> parallel_map(std::span<const In> inputs, const std::function<Out(const In&)>& fn,
                              std::size_t workers) {
  std::vector<std::optional<Out>> slots(inputs.size());
  if (workers <= 1 || inputs.size() <= 1) {
    for (std::size_t i = 0; i < inputs.size(); ++i) slots[i].emplace(fn(inputs[i]));
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto run = [&]() {
      for (std::size_t i = next++; i < inputs.size(); i = next++) {
        try {
          slots[i].emplace(fn(inputs[i]));
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = inputs.size();
        }
      }
    };
    std::vector<std::jthread> pool;
    const std::size_t n = std::min(workers, inputs.size());
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(run);
    pool.clear();
    if (failure) std::rethrow_exception(failure);
  }
  std::vector<Out> out;
  out.reserve(inputs.size());
  for (auto& slot : slots) out.push_back(std::move(*slot));
  return out;
}

}  // namespace svg::pipeline
