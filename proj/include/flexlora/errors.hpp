#pragma once

#include <stdexcept>
#include <string>

namespace flexlora {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidMatrix : Error {
    using Error::Error;
};
struct ShapeMismatch : Error {
    using Error::Error;
};
struct RankOutOfRange : Error {
    using Error::Error;
};
struct NoContributions : Error {
    using Error::Error;
};
struct HeterogeneousRanksUnsupported : Error {
    using Error::Error;
};
struct InvalidDecay : Error {
    using Error::Error;
};
struct EmptyBatch : Error {
    using Error::Error;
};
struct InvalidConfig : Error {
    using Error::Error;
};
struct DatasetTooSmall : Error {
    using Error::Error;
};
struct PoolExhausted : Error {
    using Error::Error;
};
struct InvalidDistribution : Error {
    using Error::Error;
};

}  // namespace flexlora
