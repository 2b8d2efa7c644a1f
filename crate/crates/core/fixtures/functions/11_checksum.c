unsigned int checksum(unsigned char *buf, int len)
{
    unsigned int sum = 0;
    int i;
    if (len > 16)
        len = 16;
    for (i = 0; i < len; i++) {
        sum ^= buf[i];
        sum = (sum << 1) | (sum >> 31);
    }
    return sum;
}
