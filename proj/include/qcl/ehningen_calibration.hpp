// Copyright 2026 The qclkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <string_view>

#include "calibration.hpp"

namespace qcl {

/// Bundled copy of data/ehningen_2024-01-30.csv (27-qubit heavy-hex device).
inline constexpr std::string_view kEhningenCalibrationCsv = R"csv(# Calibration data of a 27-qubit heavy-hex superconducting device,
# snapshot 2024-01-30 08:42:06+01:00.
# Sections: [x_errors] qubit,error  [cnot_errors] control,target,error
#           [readout_errors] qubit,error  [medians] name,value
# CNOT couplings are undirected; control,target lists the pair as reported.

[x_errors]
qubit,error
19,0.00013591302669571659
16,0.00014569737631580065
24,0.0001651366443341561
6,0.00016680730700449124
3,0.00019475108276179376
25,0.00019511898972169597
12,0.0001977410765303121
23,0.0002005349723274833
13,0.00020272128722526137
9,0.0002079151356677378
26,0.0002107794975931981
0,0.00021184286817880178
1,0.0002263078174650456
15,0.00023837868227682494
11,0.0002477045424814508
22,0.0002549839225068226
18,0.00027892545750661713
21,0.0002979112936644023
5,0.00031537329438427003
2,0.00033257814929062255
4,0.0003574360500279698
20,0.0003953408174393563
14,0.0004337410173584769
8,0.0004944174096551563
17,0.0005776839080296207
10,0.001741461094155414
7,0.004221992895832456

[cnot_errors]
control,target,error
23,24,0.003766111620421869
22,25,0.005100573458733021
1,4,0.005725284943773834
18,21,0.0059052091403848095
19,22,0.006018110357534884
0,1,0.006244572705932261
14,16,0.006699047143990389
16,19,0.006816483127679324
2,3,0.00686035596001125
19,20,0.006865771449287628
8,9,0.007161408838511407
21,23,0.007217990657473805
5,8,0.007345102646509005
1,2,0.007464918811527332
3,5,0.0074783630145963675
12,15,0.007548664291686519
24,25,0.008734138864550017
15,18,0.009328357231174117
13,14,0.009752602982268627
11,14,0.010083426759830982
25,26,0.01018025088966229
8,11,0.01066070025821142
17,18,0.013317040648282985
6,7,0.01607606156008279
10,12,0.017207769362116293
12,13,0.021712709764238475
7,10,0.043634415742329125
4,7,0.06896314743392529

[readout_errors]
qubit,error
21,0.006699999999999928
13,0.007300000000000084
14,0.007399999999999962
16,0.00770000000000004
23,0.00770000000000004
24,0.00869999999999993
15,0.009000000000000008
4,0.009400000000000075
9,0.009400000000000075
25,0.009700000000000042
19,0.010199999999999987
1,0.010499999999999954
2,0.011199999999999988
0,0.011500000000000066
12,0.012599999999999945
18,0.012800000000000034
26,0.013399999999999967
6,0.013800000000000034
8,0.014000000000000012
10,0.015300000000000091
5,0.016699999999999937
22,0.01760000000000006
20,0.018199999999999994
7,0.020000000000000018
3,0.020499999999999963
11,0.0232
17,0.02859999999999996

[medians]
name,value
x_error,0.00023837868227682494
cnot_error,0.00747164091306185
readout_error,0.011500000000000066
t1_us,113
t2_us,96
)csv";

inline const CalibrationData &ehningen_calibration() {
    static const CalibrationData data = parse_calibration(kEhningenCalibrationCsv);
    return data;
}

} // namespace qcl
