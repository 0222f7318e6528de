#include <gtest/gtest.h>

#include <random>

#include "rtlforge/verilog.hpp"
#include "support.hpp"

using namespace rtlforge;
using namespace rtlforge::testing;

TEST(VerilogSource, EmptyTextIsRejected) {
  EXPECT_THROW(VerilogSource("", Origin::seed_corpus), PreconditionError);
}

TEST(VerilogSource, JsonRoundTrip) {
  VerilogSource s("module m; endmodule\n", Origin::debug_agent, std::string("x"));
  auto back = nlohmann::json(s).get<VerilogSource>();
  EXPECT_EQ(back, s);
}

TEST(ExtractCode, TakesTaggedBlockContent) {
  auto code = extract_code("text ```verilog\nmodule a;endmodule\n``` tail", "verilog");
  ASSERT_TRUE(code);
  EXPECT_EQ(code->text, "module a;endmodule");
}

TEST(ExtractCode, LastFenceWins) {
  auto code = extract_code("```verilog\nmodule first;endmodule\n```\nthen\n```verilog\nmodule second;endmodule\n```",
                           "verilog");
  ASSERT_TRUE(code);
  EXPECT_EQ(code->text, "module second;endmodule");
}

TEST(ExtractCode, NoFenceGivesNothing) { EXPECT_FALSE(extract_code("just prose, no code", "verilog")); }

TEST(ExtractCode, TaggedBeatsLaterUntagged) {
  auto code = extract_code("```verilog\nmodule t;endmodule\n```\n```\nplain\n```", "verilog");
  ASSERT_TRUE(code);
  EXPECT_EQ(code->text, "module t;endmodule");
}

TEST(ExtractCode, FallsBackToUntaggedFence) {
  auto code = extract_code("```\nmodule u;endmodule\n```", "verilog");
  ASSERT_TRUE(code);
  EXPECT_EQ(code->text, "module u;endmodule");
}

TEST(ExtractVerilog, AcceptsCommonTagSpellings) {
  for (const char* tag : {"verilog", "Verilog", "systemverilog", "sv", "v"}) {
    auto code = extract_verilog(std::string("```") + tag + "\nmodule k;endmodule\n```", Origin::debug_agent);
    ASSERT_TRUE(code) << tag;
    EXPECT_EQ(code->origin, Origin::debug_agent);
  }
}

TEST(ExtractCode, FenceRoundTripProperty) {
  std::mt19937 rng(20240611);
  const std::string alphabet = "abcxyz019 \n\t;()[]{}<>=+-*/'\"`#@$_";
  for (int trial = 0; trial < 500; ++trial) {
    std::string body;
    const int len = 1 + static_cast<int>(rng() % 200);
    for (int i = 0; i < len; ++i) body += alphabet[rng() % alphabet.size()];
    if (body.find("```") != std::string::npos) continue;
    if (body.find_first_not_of(" \n\t") == std::string::npos) continue;
    auto back = extract_code(embed_in_fence(body, "verilog"), "verilog");
    ASSERT_TRUE(back) << "trial " << trial;
    EXPECT_EQ(back->text, body) << "trial " << trial;
  }
}

TEST(ParseInterface, AnsiAdder) {
  auto iface = parse_interface("module add(input [1:0] a, input [1:0] b, output [2:0] s); endmodule");
  EXPECT_EQ(iface.module_name, "add");
  ASSERT_EQ(iface.ports.size(), 3u);
  EXPECT_EQ(iface.ports[0], (Port{"a", PortDirection::input, 2}));
  EXPECT_EQ(iface.ports[1], (Port{"b", PortDirection::input, 2}));
  EXPECT_EQ(iface.ports[2], (Port{"s", PortDirection::output, 3}));
}

TEST(ParseInterface, PortlessModule) {
  auto iface = parse_interface("module t; endmodule");
  EXPECT_EQ(iface.module_name, "t");
  EXPECT_TRUE(iface.ports.empty());
}

TEST(ParseInterface, NonAnsiTwinMatchesAnsi) {
  auto ansi = parse_interface(design_text("adder", "ref.v"));
  auto non_ansi = parse_interface(design_text("adder", "ref_nonansi.v"));
  EXPECT_EQ(ansi, non_ansi);
  EXPECT_TRUE(non_ansi.complete);
}

TEST(ParseInterface, ParametersAndClog2) {
  auto iface = parse_interface(R"(
module fifo #(parameter DEPTH = 16, parameter W = 8) (
  input clk,
  input [W-1:0] din,
  output reg [$clog2(DEPTH)-1:0] level,
  inout [0:3] bus
);
endmodule)");
  EXPECT_EQ(iface.module_name, "fifo");
  ASSERT_EQ(iface.ports.size(), 4u);
  EXPECT_EQ(iface.ports[1].width, 8u);
  EXPECT_EQ(iface.ports[2].width, 4u);
  EXPECT_EQ(iface.ports[2].direction, PortDirection::output);
  EXPECT_EQ(iface.ports[3].width, 4u);
  EXPECT_EQ(iface.ports[3].direction, PortDirection::inout);
}

TEST(ParseInterface, DirectionAndRangeCarryOver) {
  auto iface = parse_interface("module m(input [3:0] a, b, output c); endmodule");
  ASSERT_EQ(iface.ports.size(), 3u);
  EXPECT_EQ(iface.ports[1], (Port{"b", PortDirection::input, 4}));
  EXPECT_EQ(iface.ports[2], (Port{"c", PortDirection::output, 1}));
}

TEST(ParseInterface, TopIsTheUninstantiatedModule) {
  auto iface = parse_interface(R"(
module leaf(input x, output y); assign y = x; endmodule
module top(input i, output o); leaf u0(.x(i), .y(o)); endmodule
)");
  EXPECT_EQ(iface.module_name, "top");
}

TEST(ParseInterface, CommentsAreIgnored) {
  auto iface = parse_interface("// module fake(input z);\n/* module other; */ module real_one(input a); endmodule");
  EXPECT_EQ(iface.module_name, "real_one");
}

TEST(ParseInterface, NoModuleThrows) { EXPECT_THROW(parse_interface("wire x;"), NoModuleFound); }

TEST(ModuleScan, TestbenchInstantiatesExternalDut) {
  const auto tb = design_text("adder", "tb.v");
  EXPECT_EQ(declared_modules(tb), std::vector<std::string>{"tb"});
  EXPECT_EQ(instantiated_modules(tb), std::vector<std::string>{"add"});
  EXPECT_TRUE(instantiates_external_module(tb));
  EXPECT_FALSE(instantiates_external_module(design_text("adder", "ref.v")));
  EXPECT_FALSE(instantiates_external_module(design_text("adder", "ref.v") + tb));
}

TEST(ModuleScan, PositionalAndParameterisedInstances) {
  auto mods = instantiated_modules("module tb; counter #(.W(4)) dut (clk, en, rst, count); endmodule");
  EXPECT_EQ(mods, std::vector<std::string>{"counter"});
}

TEST(MentionsIdentifier, WholeWordsOnly) {
  EXPECT_TRUE(mentions_identifier("the output `s` holds", "s"));
  EXPECT_FALSE(mentions_identifier("sum of inputs", "s"));
  EXPECT_TRUE(mentions_identifier("a_b and c", "a_b"));
  EXPECT_FALSE(mentions_identifier("a_bc", "a_b"));
}

TEST(ModuleInterface, RenderLooksLikeAHeader) {
  auto text = parse_interface(design_text("adder", "ref.v")).render();
  EXPECT_NE(text.find("module add"), std::string::npos);
  EXPECT_NE(text.find("input [1:0] a"), std::string::npos);
  EXPECT_NE(text.find("output [2:0] s"), std::string::npos);
}
