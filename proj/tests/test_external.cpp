#include <gtest/gtest.h>

#include <cstdio>

#include "test_support.hpp"

using namespace tabal;
using tabal::testing::FixedDistributionPredictor;
using tabal::testing::random_matrix;

namespace {

ExternalPredictor spawn(const std::string& mode, double timeout = 10.0) {
    ExternalEndpoint ep;
    ep.command = {MOCK_SERVER_PATH, "--mode", mode};
    ep.timeout_seconds = timeout;
    return ExternalPredictor(ep);
}

struct Fixture {
    Matrix cx = Matrix::from_rows({{0.0, 1.0}, {2.0, -1.0}, {0.5, 0.5}});
    std::vector<std::size_t> cy{0, 1, 2};
    Matrix q = Matrix::from_rows({{0.1, 0.2}, {-3.0, 1.0}});
};

}  // namespace

TEST(ExternalPredictor, HandshakeAndUniformRows) {
    auto p = spawn("uniform");
    EXPECT_EQ(p.name(), "mock");
    Fixture f;
    const auto P = p.predict_proba(f.cx, f.cy, f.q, 3);
    ASSERT_EQ(P.rows(), 2u);
    ASSERT_EQ(P.cols(), 3u);
    for (std::size_t i = 0; i < 2; ++i) {
        for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(P(i, k), 1.0 / 3.0, 1e-12);
    }
}

TEST(ExternalPredictor, SequentialRequestsOnOneConnection) {
    auto p = spawn("fixed");
    FixedDistributionPredictor twin;
    Rng rng(2);
    Fixture f;
    for (int t = 0; t < 5; ++t) {
        const auto q = random_matrix(rng, 4, 2);
        EXPECT_EQ(p.predict_proba(f.cx, f.cy, q, 3), twin.predict_proba(f.cx, f.cy, q, 3));
    }
}

TEST(ExternalPredictor, MatchesInProcessNeighbor) {
    auto p = spawn("neighbor");
    NeighborPredictor nb;
    Rng rng(3);
    const auto cx = random_matrix(rng, 12, 3);
    std::vector<std::size_t> cy(12);
    for (std::size_t i = 0; i < 12; ++i) cy[i] = i % 4;
    const auto q = random_matrix(rng, 9, 3);
    const auto remote = p.predict_proba(cx, cy, q, 4);
    const auto local = nb.predict_proba(cx, cy, q, 4);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(remote(i, k), local(i, k), 1e-12);
    }
}

TEST(ExternalPredictor, RejectsOffSimplexResponse) {
    auto p = spawn("bad_sum");
    Fixture f;
    EXPECT_THROW(p.predict_proba(f.cx, f.cy, f.q, 3), ProtocolError);
}

TEST(ExternalPredictor, SurfacesServerError) {
    auto p = spawn("error");
    Fixture f;
    try {
        p.predict_proba(f.cx, f.cy, f.q, 3);
        FAIL() << "expected ProtocolError";
    } catch (const ProtocolError& e) {
        EXPECT_NE(std::string(e.what()).find("scripted failure"), std::string::npos);
    }
}

TEST(ExternalPredictor, RejectsMismatchedRequestId) {
    auto p = spawn("wrong_id");
    Fixture f;
    EXPECT_THROW(p.predict_proba(f.cx, f.cy, f.q, 3), ProtocolError);
}

TEST(ExternalPredictor, RejectsProtocolVersion) { EXPECT_THROW(spawn("bad_version"), ProtocolError); }

TEST(ExternalPredictor, RejectsMalformedJson) {
    auto p = spawn("garbage");
    Fixture f;
    EXPECT_THROW(p.predict_proba(f.cx, f.cy, f.q, 3), ProtocolError);
}

TEST(ExternalPredictor, TimesOut) {
    auto p = spawn("slow", 0.3);
    Fixture f;
    const auto start = std::chrono::steady_clock::now();
    EXPECT_THROW(p.predict_proba(f.cx, f.cy, f.q, 3), ProtocolError);
    EXPECT_LT(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(), 2.5);
}

TEST(ExternalPredictor, ServerHangupIsAnError) { EXPECT_THROW(spawn("hangup"), ProtocolError); }

TEST(ExternalPredictor, MissingExecutableIsAnError) {
    ExternalEndpoint ep;
    ep.command = {"/nonexistent/predictor-binary"};
    ep.timeout_seconds = 5;
    EXPECT_THROW(ExternalPredictor{ep}, ProtocolError);
}

TEST(ExternalPredictor, RequestShape) {
    Fixture f;
    const auto j = wire::predict_request(7, 3, f.cx, f.cy, f.q);
    EXPECT_EQ(j.at("type"), "predict");
    EXPECT_EQ(j.at("request_id"), 7);
    EXPECT_EQ(j.at("classes"), 3);
    EXPECT_EQ(j.at("context").at("x").size(), 3u);
    EXPECT_EQ(j.at("context").at("y"), nlohmann::json({0, 1, 2}));
    EXPECT_EQ(j.at("query").at("x").at(1), nlohmann::json({-3.0, 1.0}));
}

TEST(ExternalPredictor, ServerRecoversFromMalformedRequestLine) {
    SubprocessTransport t({MOCK_SERVER_PATH, "--mode", "uniform"});
    t.write_line("{not json");
    const auto reply = nlohmann::json::parse(t.read_line(std::chrono::seconds(5)));
    EXPECT_EQ(reply.at("type"), "error");
    t.write_line(wire::hello().dump());
    EXPECT_EQ(nlohmann::json::parse(t.read_line(std::chrono::seconds(5))).at("type"), "hello_ack");
}

TEST(ExternalPredictor, TcpTransport) {
    const std::string cmd = std::string(MOCK_SERVER_PATH) + " --mode fixed --tcp 0";
    FILE* server = ::popen(cmd.c_str(), "r");
    ASSERT_NE(server, nullptr);
    int port = 0;
    ASSERT_EQ(std::fscanf(server, "PORT %d", &port), 1);
    {
        ExternalEndpoint ep;
        ep.host = "127.0.0.1";
        ep.port = static_cast<std::uint16_t>(port);
        ep.timeout_seconds = 10;
        ExternalPredictor p(ep);
        Fixture f;
        FixedDistributionPredictor twin;
        EXPECT_EQ(p.predict_proba(f.cx, f.cy, f.q, 3), twin.predict_proba(f.cx, f.cy, f.q, 3));
    }
    EXPECT_EQ(::pclose(server), 0);
}

TEST(ExternalPredictor, TcpConnectionRefused) {
    ExternalEndpoint ep;
    ep.host = "127.0.0.1";
    ep.port = 1;
    EXPECT_THROW(ExternalPredictor{ep}, ProtocolError);
}
