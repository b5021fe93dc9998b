#ifndef MORSECON_ERRORS_HPP
#define MORSECON_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace morsecon {

enum class ErrorKind {
    ShapeMismatch,
    NotAComplex,
    NotChainMap,
    ParseError,
    ArityError,
    NewtonDivergence,
    DegenerateSpectrum,
    NormalNotEigenvector,
    NotEquivariant,
    BlowUp,
    CaptureAmbiguity,
    SingularProjection,
    NonTransverseCut,
    Precondition,
    LeakyRegion,
    ZeroEigenvalue,
    CertificateMissing,
    CertificateFailure,
    NotIsolated,
    PairingAmbiguous,
    ConfigError
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace morsecon

#endif
