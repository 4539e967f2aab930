//! Harmonized System aggregation (chapter to section) and destination
//! continents.

/// HS section (industry, 1..=22) for an HS chapter (sector, 1..=99).
pub fn industry_of_chapter(chapter: u8) -> Option<u8> {
    let section = match chapter {
        1..=5 => 1,
        6..=14 => 2,
        15 => 3,
        16..=24 => 4,
        25..=27 => 5,
        28..=38 => 6,
        39..=40 => 7,
        41..=43 => 8,
        44..=46 => 9,
        47..=49 => 10,
        50..=63 => 11,
        64..=67 => 12,
        68..=70 => 13,
        71 => 14,
        72..=83 => 15,
        84..=85 => 16,
        86..=89 => 17,
        90..=92 => 18,
        93 => 19,
        94..=96 => 20,
        97 => 21,
        98..=99 => 22,
        _ => return None,
    };
    Some(section)
}

/// Chapters belonging to an industry, in ascending order.
pub fn chapters_of_industry(section: u8) -> Vec<u8> {
    (1..=99).filter(|&c| industry_of_chapter(c) == Some(section)).collect()
}

pub fn industry_name(section: u8) -> &'static str {
    match section {
        1 => "Live Animals/Animal Products",
        2 => "Vegetable Products",
        3 => "Animal or Vegetable Fats/Oils",
        4 => "Prepared Foodstuffs",
        5 => "Mineral Products",
        6 => "Products of Chemical Industries",
        7 => "Plastics, Rubber",
        8 => "Raw Hides, Skins and Leather",
        9 => "Wood",
        10 => "Paper",
        11 => "Textile",
        12 => "Footwear",
        13 => "Art. of Stone, Cement",
        14 => "Jewelries",
        15 => "Base Metals",
        16 => "Machinery Equipment",
        17 => "Vehicles",
        18 => "Precision Instruments",
        19 => "Arms",
        20 => "Misc. Manuf. Art.",
        21 => "Works of Art",
        22 => "Special Classification Provisions",
        _ => "Unknown",
    }
}

/// Continent label for an ISO-3166 alpha-3 code; unlisted codes map to
/// `"other"`.
pub fn continent_of(iso3: &str) -> &'static str {
    match iso3 {
        "USA" | "CAN" | "MEX" => "north_america",
        "GTM" | "HND" | "SLV" | "NIC" | "CRI" | "PAN" | "BLZ" | "CUB" | "DOM" | "HTI" | "JAM"
        | "PRI" | "TTO" | "BRB" | "BHS" | "ABW" | "CUW" => "central_america_caribbean",
        "ECU" | "PER" | "BRA" | "CHL" | "ARG" | "VEN" | "BOL" | "PRY" | "URY" | "GUY" | "SUR" => {
            "south_america"
        }
        "ESP" | "DEU" | "FRA" | "ITA" | "NLD" | "BEL" | "GBR" | "PRT" | "CHE" | "SWE" | "NOR"
        | "DNK" | "FIN" | "POL" | "AUT" | "IRL" | "RUS" | "TUR" | "GRC" | "CZE" | "UKR" => "europe",
        "CHN" | "JPN" | "KOR" | "IND" | "SGP" | "HKG" | "TWN" | "MYS" | "THA" | "VNM" | "IDN"
        | "PHL" | "ISR" | "ARE" | "SAU" | "LBN" | "JOR" => "asia",
        "AUS" | "NZL" => "oceania",
        "ZAF" | "EGY" | "MAR" | "NGA" | "KEN" | "GHA" | "DZA" | "AGO" | "CIV" | "SEN" => "africa",
        _ => "other",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chapter_ranges_cover_the_mapping_table() {
        assert_eq!(industry_of_chapter(1), Some(1));
        assert_eq!(industry_of_chapter(9), Some(2));
        assert_eq!(industry_of_chapter(15), Some(3));
        assert_eq!(industry_of_chapter(42), Some(8));
        assert_eq!(industry_of_chapter(64), Some(12));
        assert_eq!(industry_of_chapter(71), Some(14));
        assert_eq!(industry_of_chapter(87), Some(17));
        assert_eq!(industry_of_chapter(94), Some(20));
        assert_eq!(industry_of_chapter(99), Some(22));
        assert_eq!(industry_of_chapter(0), None);
        // every chapter 1..=99 lands in exactly one of the 22 sections
        let total: usize = (1..=22).map(|s| chapters_of_industry(s).len()).sum();
        assert_eq!(total, 99);
    }

    #[test]
    fn continents() {
        assert_eq!(continent_of("USA"), "north_america");
        assert_eq!(continent_of("ECU"), "south_america");
        assert_eq!(continent_of("XYZ"), "other");
    }
}
