#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <string>

namespace irim {

/// Counts activation elements held for backward use or as transient layer
/// internals. Parameters, cotangents and the single working machine state are
/// not counted, which keeps the metric independent of allocator behaviour.
class MemoryMeter {
 public:
  void retain(std::size_t elements) {
    current_ += elements;
    peak_ = std::max(peak_, current_);
    auto& phase_peak = phase_peaks_[phase_];
    phase_peak = std::max(phase_peak, current_);
  }

  void release(std::size_t elements) {
    current_ -= std::min(current_, elements);
  }

  void set_phase(std::string phase) {
    phase_ = std::move(phase);
    auto& phase_peak = phase_peaks_[phase_];
    phase_peak = std::max(phase_peak, current_);
  }

  void count_layer_eval(std::size_t n = 1) { layer_evals_ += n; }

  void reset() { *this = MemoryMeter(); }

  std::size_t current() const { return current_; }
  std::size_t peak() const { return peak_; }
  std::size_t layer_evals() const { return layer_evals_; }
  std::size_t phase_peak(const std::string& phase) const {
    auto it = phase_peaks_.find(phase);
    return it == phase_peaks_.end() ? 0 : it->second;
  }
  const std::map<std::string, std::size_t>& phase_peaks() const {
    return phase_peaks_;
  }

  /// Scoped retention: counts `elements` until destroyed.
  class Hold {
   public:
    Hold(MemoryMeter* meter, std::size_t elements)
        : meter_(meter), elements_(elements) {
      if (meter_) meter_->retain(elements_);
    }
    ~Hold() {
      if (meter_) meter_->release(elements_);
    }
    Hold(const Hold&) = delete;
    Hold& operator=(const Hold&) = delete;

   private:
    MemoryMeter* meter_;
    std::size_t elements_;
  };

 private:
  std::size_t current_ = 0;
  std::size_t peak_ = 0;
  std::size_t layer_evals_ = 0;
  std::string phase_ = "default";
  std::map<std::string, std::size_t> phase_peaks_;
};

}  // namespace irim
