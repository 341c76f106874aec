#pragma once

#include <stdexcept>
#include <string>

namespace cpg {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Raised by oracle backends. Every failure path is an exception; no backend
// may convert a failure into a binary answer.
class OracleError : public Error {
public:
    enum class Kind { AbsentFeature, Timeout, Transport, UnparseableReply, Interrupted };

    OracleError(Kind kind, const std::string& msg) : Error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

class EngineError : public Error {
public:
    explicit EngineError(const std::string& msg) : Error(msg) {}
};

class EvalError : public Error {
public:
    explicit EvalError(const std::string& msg) : Error(msg) {}
};

class TreeError : public Error {
public:
    explicit TreeError(const std::string& msg) : Error(msg) {}
};

class CorpusError : public Error {
public:
    explicit CorpusError(const std::string& msg) : Error(msg) {}
};

class BuilderError : public Error {
public:
    explicit BuilderError(const std::string& msg) : Error(msg) {}
};

}  // namespace cpg
