#ifndef POSTWATCH_TRAINER_HPP
#define POSTWATCH_TRAINER_HPP

#include "postwatch/detector.hpp"
#include "postwatch/types.hpp"

#include <span>

namespace postwatch {

// One infection trace's signature: the first three POST sizes.
struct LearningSample {
    std::string trace_id;
    TripleVector triple;
};

// The first three POSTs toward the server key that received the trace's
// first POST; traces contacting that key fewer than three times are
// rejected (reason filled in).
std::optional<LearningSample>
extract_learning_sample(const std::string& trace_id,
                        std::span<const PostEvent> events,
                        std::string* reject_reason = nullptr);

// Centroid = component-wise mean; d_min_sq/d_max_sq scan the samples'
// squared distances to it. d_limit_sq is left unset for the tuner.
// Throws std::invalid_argument on an empty sample list.
FamilyModel fit(std::span<const LearningSample> samples,
                const std::string& family);

} // namespace postwatch

#endif
