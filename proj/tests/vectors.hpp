#pragma once

namespace sharedb::test {

struct GcmVector {
  const char* key;
  const char* iv;
  const char* pt;
  const char* aad;
  const char* ct;
  const char* tag;
};

// AES-256 cases 13-16 of the GCM submission test vectors; re-checked against
// the Python `cryptography` AESGCM implementation before freezing.
inline constexpr GcmVector kGcmVectors[] = {
    {"0000000000000000000000000000000000000000000000000000000000000000", "000000000000000000000000", "",
     "", "", "530F8AFBC74536B9A963B4F1C4CB738B"},
    {"0000000000000000000000000000000000000000000000000000000000000000", "000000000000000000000000",
     "00000000000000000000000000000000", "", "CEA7403D4D606B6E074EC5D3BAF39D18",
     "D0D1C8A799996BF0265B98B5D48AB919"},
    {"FEFFE9928665731C6D6A8F9467308308FEFFE9928665731C6D6A8F9467308308", "CAFEBABEFACEDBADDECAF888",
     "D9313225F88406E5A55909C5AFF5269A86A7A9531534F7DA2E4C303D8A318A721C3C0C95956809532FCF0E2449A6B525"
     "B16AEDF5AA0DE657BA637B391AAFD255",
     "",
     "522DC1F099567D07F47F37A32A84427D643A8CDCBFE5C0C97598A2BD2555D1AA8CB08E48590DBB3DA7B08B1056828838"
     "C5F61E6393BA7A0ABCC9F662898015AD",
     "B094DAC5D93471BDEC1A502270E3CC6C"},
    {"FEFFE9928665731C6D6A8F9467308308FEFFE9928665731C6D6A8F9467308308", "CAFEBABEFACEDBADDECAF888",
     "D9313225F88406E5A55909C5AFF5269A86A7A9531534F7DA2E4C303D8A318A721C3C0C95956809532FCF0E2449A6B525"
     "B16AEDF5AA0DE657BA637B39",
     "FEEDFACEDEADBEEFFEEDFACEDEADBEEFABADDAD2",
     "522DC1F099567D07F47F37A32A84427D643A8CDCBFE5C0C97598A2BD2555D1AA8CB08E48590DBB3DA7B08B1056828838"
     "C5F61E6393BA7A0ABCC9F662",
     "76FC6ECE0F4E1768CDDF8853BB2D551B"},
};

// RFC 7748 section 6.1.
inline constexpr const char* kX25519AlicePriv = "77076D0A7318A57D3C16C17251B26645DF4C2F87EBC0992AB177FBA51DB92C2A";
inline constexpr const char* kX25519AlicePub = "8520F0098930A754748B7DDCB43EF75A0DBF3A0D26381AF4EBA4A98EAA9B4E6A";
inline constexpr const char* kX25519BobPriv = "5DAB087E624A8A4B79E17F8B83800EE66F3BB1292618B6FD1C2F8B27FF88E0EB";
inline constexpr const char* kX25519BobPub = "DE9EDB7D7B7DC1B4D35B61C2ECE435373F8343C85B78674DADFC7E146F882B4F";
inline constexpr const char* kX25519Shared = "4A5D9D5BA4CE2DE1728E3BF480350F25E07E21C947D19E3376F09B3C1E161742";

}  // namespace sharedb::test
