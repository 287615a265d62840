//! Closed-form baseline of Wan et al. for studies reporting the three
//! quartiles and the sample size.

use crate::error::{Error, Result};
use crate::summaries::{Field, SummaryStats};

/// Mean and SD from `{q1, median, q3, n}` assuming normal data:
/// mean = (q1 + median + q3) / 3, sd = (q3 - q1) / (2 z((0.75n - 0.125) / (n + 0.25))).
pub fn wan_s3(stats: &SummaryStats) -> Result<(f64, f64)> {
    let need = |f: Field| {
        stats
            .get(f)
            .ok_or_else(|| Error::InvalidStats(format!("the quartile baseline needs `{f}`")))
    };
    let (q1, median, q3) = (need(Field::Q1)?, need(Field::Median)?, need(Field::Q3)?);
    wan_s3_values(q1, median, q3, stats.n())
}

pub fn wan_s3_values(q1: f64, median: f64, q3: f64, n: usize) -> Result<(f64, f64)> {
    if n < 2 {
        return Err(Error::InvalidStats(format!(
            "sample size n must be at least 2, got {n}"
        )));
    }
    if q3 < q1 {
        return Err(Error::InvalidStats(format!("q1 ({q1}) exceeds q3 ({q3})")));
    }
    let n = n as f64;
    let z = std_normal_quantile((0.75 * n - 0.125) / (n + 0.25))?;
    Ok(((q1 + median + q3) / 3.0, (q3 - q1) / (2.0 * z)))
}

/// Inverse of the standard normal CDF (Wichura's AS 241, about 1e-16 relative).
#[allow(clippy::excessive_precision)]
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "probability {p} outside (0, 1)"
        )));
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_608_0,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083_0e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061_0e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561_0e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_90,
        5.769_497_221_460_691_405_50,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_70e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_40e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_40,
        6.897_673_349_851_000_045_50e-1,
        1.481_039_764_274_800_745_90e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946_00e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_20,
        5.463_784_911_164_114_369_90,
        1.784_826_539_917_291_335_80,
        2.965_605_718_285_048_912_30e-1,
        2.653_218_952_657_612_309_30e-2,
        1.242_660_947_388_078_438_60e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.998_322_065_558_879_376_90e-1,
        1.369_298_809_227_358_053_10e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591_00e-4,
        1.846_318_317_510_054_681_80e-5,
        1.421_511_758_316_445_888_70e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn ratio(num: &[f64; 8], den: &[f64; 8], r: f64) -> f64 {
        let horner = |c: &[f64; 8]| c.iter().rev().fold(0.0, |acc, &k| acc * r + k);
        horner(num) / horner(den)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return Ok(q * ratio(&A, &B, r));
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let r = (-tail.ln()).sqrt();
    let z = if r <= 5.0 {
        ratio(&C, &D, r - 1.6)
    } else {
        ratio(&E, &F, r - 5.0)
    };
    Ok(if q < 0.0 { -z } else { z })
}
