// error.hpp: exception hierarchy shared by every dcr module

#pragma once

#include <stdexcept>
#include <string>

namespace dcr {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define DCR_DEFINE_ERROR(Name)                  \
    class Name : public Error {                 \
    public:                                     \
        using Error::Error;                     \
    }

// fock
DCR_DEFINE_ERROR(InvalidDimension);
DCR_DEFINE_ERROR(LayoutMismatch);
DCR_DEFINE_ERROR(ContractViolation);

// cavity
DCR_DEFINE_ERROR(NoRoot);
DCR_DEFINE_ERROR(InsufficientScan);
DCR_DEFINE_ERROR(BranchCrossing);
DCR_DEFINE_ERROR(UnstableFluxPoint);

// model
DCR_DEFINE_ERROR(ResonanceViolation);
DCR_DEFINE_ERROR(DuplicatePair);

// thermal
DCR_DEFINE_ERROR(EnsembleTooLarge);

// dynamics
DCR_DEFINE_ERROR(DenseCapExceeded);

/// Raised when a propagation breaches its norm or energy tolerance.
class PropagationDiverged : public Error {
public:
    PropagationDiverged(const std::string& what, double time)
        : Error(what), time_(time) {}
    double time() const noexcept { return time_; }

private:
    double time_;
};

/// Scenario schema or invariant error; `path()` is the offending document path.
class ScenarioError : public Error {
public:
    ScenarioError(std::string path, const std::string& message)
        : Error(path.empty() ? message : path + ": " + message), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

#undef DCR_DEFINE_ERROR

} // namespace dcr
