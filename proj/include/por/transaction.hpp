#pragma once

#include <cstdint>
#include <vector>

#include "por/encoder.hpp"
#include "por/numerics.hpp"

namespace por {

// One recorded datapoint: the encoded input, the probability vector the
// submitter claims its weights produce on it, and the (claimed) true label.
struct EvidenceTuple {
    EncodedDatapoint kappa;
    std::vector<double> y_hat;
    std::uint64_t y = 0;

    bool operator==(const EvidenceTuple&) const = default;
};

// A participant's per-round submission: trained weights plus the evidence
// needed to check and score them.
struct Transaction {
    std::uint64_t participant_id = 0;
    std::uint64_t round = 0;
    std::uint64_t claimed_sample_count = 0;
    ClassifierWeights omega;
    std::vector<EvidenceTuple> evidence;

    bool operator==(const Transaction&) const = default;
};

} // namespace por
